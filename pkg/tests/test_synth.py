"""Synthetic fixture bundles: planted truth, determinism, and recoverability."""

import json
import math

import numpy as np
import pytest

from capvox import (
    DesignMatrix,
    SolverConfig,
    ValidationError,
    align,
    build_feature_matrix,
    generate_bundle,
    load_config,
    pearson,
    read_fmat,
    read_responses,
    read_word_states,
    romp_solve,
    standardize_columns,
)
from capvox.synth import VOCABULARY


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "bundle"
    return generate_bundle(
        out, seed=3, n_train=150, n_test=50, n_voxels=12, state_dim=48, sparsity=3
    )


def test_generate_bundle_validation(tmp_path):
    with pytest.raises(ValidationError, match="n_train"):
        generate_bundle(tmp_path, n_train=4, sparsity=4)
    with pytest.raises(ValidationError, match="n_test"):
        generate_bundle(tmp_path, n_test=2)
    with pytest.raises(ValidationError, match="words_min"):
        generate_bundle(tmp_path, words_min=0)
    with pytest.raises(ValidationError, match="sparsity"):
        generate_bundle(tmp_path, state_dim=8, sparsity=9)


def test_truth_structure(bundle):
    truth = bundle.truth
    assert truth["noise_ceiling"] == pytest.approx(1 / math.sqrt(2))
    assert len(truth["voxels"]) == 12
    for entry in truth["voxels"]:
        support = entry["support"]
        assert support == sorted(support)
        assert len(set(support)) == 3
        assert all(0 <= j < 48 for j in support)
        for c in entry["coefficients"]:
            assert abs(c) == pytest.approx(1 / math.sqrt(3))
    on_disk = json.loads(open(bundle.paths["truth"]).read())
    assert on_disk == truth


def test_sequences_respect_bounds_and_vocabulary(bundle):
    seqs = read_word_states(
        bundle.paths["train_states_jsonl"], bundle.paths["train_states_fmat"]
    )
    assert len(seqs) == 150
    assert [s.image_id for s in seqs] == [f"train{i:04d}" for i in range(150)]
    vocab = set(VOCABULARY)
    for seq in seqs:
        assert 5 <= len(seq.tokens) <= 9
        assert set(seq.tokens) <= vocab
        assert seq.states.dtype == np.float32


def test_features_are_pooled_states(bundle):
    seqs = read_word_states(
        bundle.paths["train_states_jsonl"], bundle.paths["train_states_fmat"]
    )
    pooled = build_feature_matrix(seqs, expected_dim=48)
    stored = read_fmat(bundle.paths["features_train"])
    assert stored.dtype == "f32"
    np.testing.assert_array_equal(stored.values, pooled.values)
    assert stored.ids == pooled.image_ids


def test_config_matches_bundle(bundle):
    cfg = load_config(bundle.paths["config"])
    assert cfg.state_dim == 48
    assert cfg.sparsity_s == 3
    assert cfg.seed == 3


def test_responses_sit_at_planted_snr(bundle):
    features = read_fmat(bundle.paths["features_train"])
    responses = read_fmat(bundle.paths["responses_train"])
    _, params = standardize_columns(DesignMatrix(np.asarray(features.values, dtype=np.float64)))
    z = params.apply(features.values)
    # Correlation between each voxel's clean planted signal and its noisy
    # response concentrates near the 1/sqrt(2) noise ceiling.
    corrs = []
    for entry in bundle.truth["voxels"]:
        v = int(entry["voxel_id"][1:])
        signal = z[:, entry["support"]] @ np.asarray(entry["coefficients"])
        corrs.append(pearson(signal, responses.values[:, v]))
    mean_corr = float(np.mean(corrs))
    assert abs(mean_corr - 1 / math.sqrt(2)) < 0.08


def test_planted_supports_recoverable(bundle):
    features = read_fmat(bundle.paths["features_train"])
    responses = read_responses(bundle.paths["responses_train"], bundle.paths["voxel_meta"])
    X = DesignMatrix(np.asarray(features.values, dtype=np.float64))
    cfg = SolverConfig(sparsity_s=3)
    hits = 0
    for entry in bundle.truth["voxels"]:
        v = int(entry["voxel_id"][1:])
        solution = romp_solve(X, responses.values[:, v], cfg, standardize=True)
        if set(entry["support"]) <= set(solution.support.tolist()):
            hits += 1
    assert hits == 12


def test_control_features_share_scale(bundle):
    real = read_fmat(bundle.paths["features_train"]).values
    control = read_fmat(bundle.paths["features_train_control"]).values
    assert control.dtype == np.float32
    assert control.shape == real.shape
    # Added noise is column-scale matched: control variance is about twice
    # the real feature variance, and means stay put.
    ratio = control.var(axis=0) / real.var(axis=0)
    assert abs(float(np.median(ratio)) - 2.0) < 0.35
    drift = np.abs(control.mean(axis=0) - real.mean(axis=0)) / real.std(axis=0)
    assert float(drift.max()) < 0.5


def test_alignment_of_bundle_files(bundle):
    features = read_fmat(bundle.paths["features_test"])
    responses = read_responses(bundle.paths["responses_test"], bundle.paths["voxel_meta"])
    assert features.ids == responses.image_ids
    from capvox import FeatureMatrix, ICF_SOURCE

    fm = FeatureMatrix(features.values, features.ids, ICF_SOURCE)
    aligned_f, aligned_r = align(fm, responses)
    assert aligned_f.image_ids == fm.image_ids
