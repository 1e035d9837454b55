"""Self-contained synthetic fixture bundles with planted ground truth.

A bundle holds caption word states, pooled features, a degraded control
feature set, voxel responses generated from planted sparse weights at a
1:1 signal-to-noise ratio, the voxel metadata CSV, a matching config
file, and the ground truth itself. Everything is derived from one seed,
so two runs with the same seed are byte-identical on disk.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig, save_config
from .encoding import HEMISPHERES, ROI_NAMES, VoxelRecord
from .errors import ValidationError
from .features import WordStateSequence, build_feature_matrix
from .interchange import write_fmat, write_voxel_meta, write_word_states
from .solver import standardize_columns, DesignMatrix

VOCABULARY = [
    "man", "woman", "people", "dog", "cat", "building", "street", "water",
    "tree", "mountain", "room", "table", "field", "horse", "bird", "boat",
    "train", "window", "grass", "next", "close", "near", "above", "under",
    "standing", "sitting", "walking", "riding", "holding", "looking",
    "white", "black", "brown", "green", "large", "small", "group", "crowd",
    "plate", "food", "snow", "beach", "ocean", "city", "road", "sign",
    "light", "door", "wall", "park",
    "a", "an", "the", "of", "and", "to", "in", "on", "is", "are", "with", "at",
]

SIGMA_SIGNAL = 1.0
SIGMA_NOISE = 1.0


@dataclass
class SynthBundle:
    """Paths and planted truth for one generated fixture set."""

    out_dir: str
    paths: dict
    truth: dict


def _make_sequences(rng, prefix: str, count: int, state_dim: int, words_min: int, words_max: int) -> list:
    seqs = []
    for i in range(count):
        k = int(rng.integers(words_min, words_max + 1))
        tokens = [str(t) for t in rng.choice(VOCABULARY, size=k)]
        states = rng.standard_normal((k, state_dim), dtype=np.float32)
        seqs.append(
            WordStateSequence(image_id=f"{prefix}{i:04d}", tokens=tokens, states=states)
        )
    return seqs


def generate_bundle(
    out_dir,
    seed: int = 0,
    *,
    n_train: int = 600,
    n_test: int = 113,
    n_voxels: int = 200,
    state_dim: int = 512,
    words_min: int = 5,
    words_max: int = 9,
    sparsity: int = 4,
) -> SynthBundle:
    """Generate and write a complete fixture bundle under ``out_dir``."""
    if n_train <= sparsity:
        raise ValidationError("n_train must exceed the planted sparsity")
    if n_test < 3:
        raise ValidationError("n_test must be at least 3")
    if not 1 <= words_min <= words_max:
        raise ValidationError("need 1 <= words_min <= words_max")
    if sparsity < 1 or sparsity > state_dim:
        raise ValidationError("sparsity must lie in [1, state_dim]")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)

    train_seqs = _make_sequences(rng, "train", n_train, state_dim, words_min, words_max)
    test_seqs = _make_sequences(rng, "test", n_test, state_dim, words_min, words_max)
    train_features = build_feature_matrix(train_seqs, expected_dim=state_dim)
    test_features = build_feature_matrix(test_seqs, expected_dim=state_dim)

    _, params = standardize_columns(DesignMatrix(train_features.values))
    z_train = params.apply(train_features.values)
    z_test = params.apply(test_features.values)

    supports = []
    coefficients = []
    responses_train = np.empty((n_train, n_voxels))
    responses_test = np.empty((n_test, n_voxels))
    scale = SIGMA_SIGNAL / math.sqrt(sparsity)
    for v in range(n_voxels):
        support = np.sort(rng.choice(state_dim, size=sparsity, replace=False))
        signs = rng.choice(np.asarray([-1.0, 1.0]), size=sparsity)
        beta = signs * scale
        noise_train = rng.standard_normal(n_train) * SIGMA_NOISE
        noise_test = rng.standard_normal(n_test) * SIGMA_NOISE
        responses_train[:, v] = z_train[:, support] @ beta + noise_train
        responses_test[:, v] = z_test[:, support] @ beta + noise_test
        supports.append([int(j) for j in support])
        coefficients.append([float(b) for b in beta])

    # Control features: same pooled values buried under matched-scale noise,
    # halving the recoverable signal correlation.
    g_train = rng.standard_normal((n_train, state_dim))
    g_test = rng.standard_normal((n_test, state_dim))
    control_train = (train_features.values + g_train * params.stds).astype(np.float32)
    control_test = (test_features.values + g_test * params.stds).astype(np.float32)

    combos = [(roi, hemi) for roi in ROI_NAMES for hemi in HEMISPHERES]
    voxels = [
        VoxelRecord(f"v{v:04d}", "S1", *combos[v % len(combos)])
        for v in range(n_voxels)
    ]

    paths = {
        name: os.path.join(out_dir, fname)
        for name, fname in [
            ("config", "config.yaml"),
            ("train_states_jsonl", "train_states.jsonl"),
            ("train_states_fmat", "train_states.fmat"),
            ("test_states_jsonl", "test_states.jsonl"),
            ("test_states_fmat", "test_states.fmat"),
            ("features_train", "features_train.fmat"),
            ("features_test", "features_test.fmat"),
            ("features_train_control", "features_train_control.fmat"),
            ("features_test_control", "features_test_control.fmat"),
            ("responses_train", "responses_train.fmat"),
            ("responses_test", "responses_test.fmat"),
            ("voxel_meta", "voxels.csv"),
            ("truth", "truth.json"),
        ]
    }

    config = PipelineConfig(state_dim=state_dim, sparsity_s=sparsity, seed=seed)
    save_config(config, paths["config"])
    write_word_states(train_seqs, paths["train_states_jsonl"], paths["train_states_fmat"])
    write_word_states(test_seqs, paths["test_states_jsonl"], paths["test_states_fmat"])
    write_fmat(
        train_features.values,
        paths["features_train"],
        dtype="f32",
        ids=train_features.image_ids,
    )
    write_fmat(
        test_features.values,
        paths["features_test"],
        dtype="f32",
        ids=test_features.image_ids,
    )
    write_fmat(
        control_train,
        paths["features_train_control"],
        dtype="f32",
        ids=train_features.image_ids,
    )
    write_fmat(
        control_test,
        paths["features_test_control"],
        dtype="f32",
        ids=test_features.image_ids,
    )
    write_fmat(
        responses_train,
        paths["responses_train"],
        dtype="f64",
        ids=train_features.image_ids,
    )
    write_fmat(
        responses_test,
        paths["responses_test"],
        dtype="f64",
        ids=test_features.image_ids,
    )
    write_voxel_meta(voxels, paths["voxel_meta"])

    ceiling = SIGMA_SIGNAL / math.sqrt(SIGMA_SIGNAL**2 + SIGMA_NOISE**2)
    truth = {
        "format": "capvox-synth-truth",
        "version": 1,
        "seed": int(seed),
        "n_train": int(n_train),
        "n_test": int(n_test),
        "state_dim": int(state_dim),
        "sparsity": int(sparsity),
        "sigma_signal": SIGMA_SIGNAL,
        "sigma_noise": SIGMA_NOISE,
        "noise_ceiling": ceiling,
        "voxels": [
            {
                "voxel_id": voxels[v].voxel_id,
                "support": supports[v],
                "coefficients": coefficients[v],
            }
            for v in range(n_voxels)
        ],
    }
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return SynthBundle(out_dir=str(out_dir), paths=paths, truth=truth)
