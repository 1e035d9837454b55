"""Run the captioner over an image directory and emit interchange files.

Everything written here goes through the voxel toolkit's interchange
module, so its validating readers accept the outputs as-is. Images
stream in sorted filename order; an unreadable file is skipped with a
log entry and recorded in the run report instead of aborting the run.
The run report also carries the checkpoint's SHA-256 so features stay
attributable to exact weights.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.nn import functional as F

from capvox import WordStateSequence, write_fmat, write_word_states

from .errors import ValidationError
from .manifest import ExtractionManifest
from .model import checkpoint_sha256, load_checkpoint

IMAGE_SUFFIXES = (".bmp", ".jpeg", ".jpg", ".png")

RUN_FORMAT = "capextract-run"
RUN_VERSION = 1

log = logging.getLogger("capextract")


def list_images(image_dir) -> list:
    """Image paths under one directory, sorted by filename."""
    root = Path(image_dir)
    if not root.is_dir():
        raise NotADirectoryError(f"image directory {str(image_dir)!r} does not exist")
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ValidationError(
            f"no images with suffixes {IMAGE_SUFFIXES} under {str(image_dir)!r}"
        )
    return paths


def load_image_tensor(path, image_size: int):
    """Decode, resize, and scale one image to a (1, 3, size, size) tensor."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((image_size, image_size), Image.BILINEAR)
    values = np.asarray(rgb, dtype=np.float32) / 255.0
    return torch.from_numpy((values - 0.5) / 0.5).permute(2, 0, 1).unsqueeze(0)


def _load_images(manifest: ExtractionManifest, image_size: int):
    """Decode every listed image; collect skips instead of failing."""
    loaded, skipped = [], []
    for path in list_images(manifest.image_dir):
        try:
            tensor = load_image_tensor(path, image_size)
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", path.name, exc)
            skipped.append({"file": path.name, "reason": str(exc)})
            continue
        loaded.append((path.stem, tensor))
    if not loaded:
        raise ValidationError(
            f"no decodable images under {str(manifest.image_dir)!r}"
        )
    ids = [image_id for image_id, _ in loaded]
    if len(set(ids)) != len(ids):
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(
            f"image ids must be unique ignoring suffixes; repeated: {duplicates}"
        )
    return loaded, skipped


def _base_report(manifest: ExtractionManifest, kind: str, image_ids, skipped) -> dict:
    return {
        "format": RUN_FORMAT,
        "version": RUN_VERSION,
        "kind": kind,
        "checkpoint": str(manifest.checkpoint),
        "checkpoint_sha256": checkpoint_sha256(manifest.checkpoint),
        "images": list(image_ids),
        "skipped": skipped,
    }


def _dump_report(report: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")


def extract_word_states(manifest: ExtractionManifest) -> dict:
    """Caption every image; write tokens, stacked states, and a report.

    Returns the run report. The token count equals the state-row count
    for every image by construction, and repeated runs over the same
    inputs produce byte-identical files because decoding never draws
    randomness.
    """
    model = load_checkpoint(manifest.checkpoint)
    loaded, skipped = _load_images(manifest, model.config.image_size)
    seqs = []
    for image_id, tensor in loaded:
        if manifest.decode == "beam":
            tokens, states = model.decode_beam(
                tensor, max_tokens=manifest.max_tokens, beam_width=manifest.beam_width
            )
        else:
            tokens, states = model.decode_greedy(tensor, max_tokens=manifest.max_tokens)
        seqs.append(WordStateSequence(image_id=image_id, tokens=tokens, states=states))
    manifest.words_path.parent.mkdir(parents=True, exist_ok=True)
    write_word_states(seqs, manifest.words_path, manifest.states_path)
    report = _base_report(manifest, "word-states", [s.image_id for s in seqs], skipped)
    report["decode"] = manifest.decode
    report["beam_width"] = manifest.beam_width
    report["max_tokens"] = manifest.max_tokens
    report["outputs"] = [manifest.words_path.name, manifest.states_path.name]
    _dump_report(report, manifest.report_path)
    return report


def _reduce(activation, reduction: str) -> np.ndarray:
    """Reduce one (channels, h, w) activation to a fixed-length f32 row."""
    if reduction == "avg2x2":
        pooled = F.adaptive_avg_pool2d(activation, 2)
    elif reduction == "avg1x1":
        pooled = F.adaptive_avg_pool2d(activation, 1)
    else:
        pooled = activation
    return pooled.flatten().numpy().astype(np.float32, copy=True)


def extract_layer_features(manifest: ExtractionManifest) -> dict:
    """Write one feature matrix per requested encoder stage.

    Rows follow the image list order; row ids carry the image ids so the
    voxel toolkit can align features with responses.
    """
    model = load_checkpoint(manifest.checkpoint)
    loaded, skipped = _load_images(manifest, model.config.image_size)
    ids = [image_id for image_id, _ in loaded]
    rows = {name: [] for name in manifest.layers}
    with torch.no_grad():
        for _, tensor in loaded:
            stages = model.encoder.stage_outputs(tensor)
            for name in manifest.layers:
                rows[name].append(_reduce(stages[name].squeeze(0), manifest.reduction))
    manifest.report_path.parent.mkdir(parents=True, exist_ok=True)
    lengths = {}
    for name in manifest.layers:
        matrix = np.vstack(rows[name])
        lengths[name] = int(matrix.shape[1])
        write_fmat(matrix, manifest.layer_path(name), dtype="f32", ids=ids)
    report = _base_report(manifest, "layer-features", ids, skipped)
    report["layers"] = list(manifest.layers)
    report["reduction"] = manifest.reduction
    report["feature_lengths"] = lengths
    report["outputs"] = [manifest.layer_path(name).name for name in manifest.layers]
    _dump_report(report, manifest.report_path)
    return report
