"""Independent reference implementations shared by the test modules."""

import numpy as np


def brute_force_select(u, ratio):
    """Exhaustive maximal-energy comparable subset with the full tie-break.

    Mirrors the documented ordering exactly: energy first, then the subset
    holding the largest magnitude, then fewer members, then lowest indices.
    Energy accumulates over the magnitude-sorted subset so float ties agree
    bit for bit with the window scan.
    """
    items = sorted(((int(i), float(m)) for i, m in u.items()), key=lambda t: (-t[1], t[0]))
    if items[0][1] == 0.0:
        return [min(i for i, _ in items)]
    best_key = None
    best = None
    m = len(items)
    for mask in range(1, 1 << m):
        subset = [items[t] for t in range(m) if mask >> t & 1]
        mags = [mag for _, mag in subset]
        hi, lo = max(mags), min(mags)
        if lo <= 0.0 or hi > ratio * lo:
            continue
        energy = 0.0
        for _, mag in subset:
            energy += mag * mag
        key = (-energy, -hi, len(subset), tuple(sorted(i for i, _ in subset)))
        if best_key is None or key < best_key:
            best_key, best = key, subset
    return sorted(i for i, _ in best)


def columnwise_max(states: np.ndarray) -> np.ndarray:
    """Plain per-coordinate loop maximum, the pooled-feature reference."""
    n, d = states.shape
    out = np.empty(d, dtype=states.dtype)
    for j in range(d):
        best = states[0, j]
        for i in range(1, n):
            if states[i, j] > best:
                best = states[i, j]
        out[j] = best
    return out


def random_candidates(rng, max_size=12):
    """One random candidate magnitude set: float or tie-prone integer mags."""
    size = int(rng.integers(1, max_size + 1))
    indices = rng.choice(200, size=size, replace=False)
    if rng.random() < 0.5:
        mags = rng.integers(0, 6, size=size).astype(np.float64)
        if not mags.any():
            mags[0] = 1.0
    else:
        mags = np.abs(rng.standard_normal(size))
    return {int(i): float(m) for i, m in zip(indices, mags)}
