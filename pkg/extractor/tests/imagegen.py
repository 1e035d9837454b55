"""Deterministic test images."""

import numpy as np
from PIL import Image


def write_images(root, count, seed, size=(72, 56), prefix="img"):
    """Seeded RGB noise PNGs; returns the written paths in name order."""
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
        path = root / f"{prefix}{i:03d}.png"
        Image.fromarray(pixels).save(path)
        paths.append(path)
    return paths
