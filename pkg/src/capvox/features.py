"""Caption word-state ingestion and fixed-size feature construction.

Variable-length caption state sequences become fixed-size image features
through a coordinate-wise maximum over the per-word hidden states.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import AlignmentError, ValidationError
from .solver import _require_finite

ICF_SOURCE = "ICF"


def cnn_source(layer_name: str) -> str:
    """Source tag for a feature matrix taken from a named encoder layer."""
    return f"CNN({layer_name})"


def source_layer(source: str):
    """Layer name inside a CNN source tag, or None for other sources."""
    if source.startswith("CNN(") and source.endswith(")"):
        return source[4:-1]
    return None


@dataclass
class WordStateSequence:
    """Ordered (token, hidden state) pairs for one captioned image."""

    image_id: str
    tokens: list
    states: np.ndarray

    def __post_init__(self):
        self.tokens = list(self.tokens)
        self.states = np.asarray(self.states)
        if self.states.ndim != 2:
            raise ValidationError(
                f"states for image {self.image_id!r} must be a 2-D matrix"
            )
        if not self.tokens:
            raise ValidationError(f"image {self.image_id!r} has an empty token list")
        if len(self.tokens) != self.states.shape[0]:
            raise ValidationError(
                f"image {self.image_id!r} has {len(self.tokens)} tokens but "
                f"{self.states.shape[0]} state rows"
            )
        _require_finite(self.states, f"states for image {self.image_id!r}")

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]


@dataclass
class PooledFeature:
    """Coordinate-wise maximum over one sequence's states."""

    vector: np.ndarray
    image_id: str


@dataclass
class FeatureMatrix:
    """n x d image features plus row identifiers and a source tag."""

    values: np.ndarray
    image_ids: list
    source: str

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.image_ids = list(self.image_ids)
        if self.values.ndim != 2:
            raise ValidationError("feature values must be a 2-D matrix")
        if len(self.image_ids) != self.values.shape[0]:
            raise ValidationError(
                f"{len(self.image_ids)} image ids for {self.values.shape[0]} rows"
            )
        dupes = _duplicates(self.image_ids)
        if dupes:
            raise ValidationError(f"duplicate image ids: {dupes}")
        _require_finite(self.values, "feature matrix")

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _duplicates(ids) -> list:
    seen = set()
    dupes = []
    for i in ids:
        if i in seen and i not in dupes:
            dupes.append(i)
        seen.add(i)
    return dupes


def _check_dim(seq: WordStateSequence, expected_dim) -> None:
    if expected_dim is not None and seq.state_dim != expected_dim:
        raise ValidationError(
            f"image {seq.image_id!r} has state dimension {seq.state_dim}, "
            f"expected {expected_dim}"
        )


def pool_max(seq: WordStateSequence, expected_dim=None) -> PooledFeature:
    """Coordinate-wise maximum across the sequence's state rows.

    Independent of row order; with a single row it is the identity.
    """
    _check_dim(seq, expected_dim)
    return PooledFeature(vector=seq.states.max(axis=0), image_id=seq.image_id)


def build_feature_matrix(seqs, expected_dim=None) -> FeatureMatrix:
    """Stack one pooled vector per sequence, preserving input order."""
    seqs = list(seqs)
    if not seqs:
        raise ValidationError("cannot build a feature matrix from zero sequences")
    dupes = _duplicates([s.image_id for s in seqs])
    if dupes:
        raise ValidationError(f"duplicate image ids: {dupes}")
    dim = expected_dim if expected_dim is not None else seqs[0].state_dim
    rows = []
    for seq in seqs:
        _check_dim(seq, dim)
        rows.append(pool_max(seq).vector)
    return FeatureMatrix(
        values=np.stack(rows),
        image_ids=[s.image_id for s in seqs],
        source=ICF_SOURCE,
    )


def align(features: FeatureMatrix, responses):
    """Reorder both tables onto their shared image ids.

    Rows outside the intersection are dropped with a warning; an empty
    intersection is an error. Row order follows the feature table.
    """
    response_ids = set(responses.image_ids)
    common = [i for i in features.image_ids if i in response_ids]
    if not common:
        raise AlignmentError("feature and response tables share no image ids")
    dropped_f = len(features.image_ids) - len(common)
    dropped_r = len(responses.image_ids) - len(common)
    if dropped_f or dropped_r:
        warnings.warn(
            f"alignment dropped {dropped_f} feature rows and {dropped_r} response rows",
            stacklevel=2,
        )
    f_pos = {img: i for i, img in enumerate(features.image_ids)}
    r_pos = {img: i for i, img in enumerate(responses.image_ids)}
    f_rows = [f_pos[i] for i in common]
    r_rows = [r_pos[i] for i in common]
    aligned_features = replace(
        features, values=features.values[f_rows], image_ids=list(common)
    )
    aligned_responses = replace(
        responses, values=responses.values[r_rows], image_ids=list(common)
    )
    return aligned_features, aligned_responses


def select_layer_sets(available, names) -> list:
    """Pick feature matrices by layer name, in the requested order."""
    names = list(names)
    if not names:
        raise ValidationError("no layer names requested")
    by_name = {}
    for matrix in available:
        layer = source_layer(matrix.source)
        key = layer if layer is not None else matrix.source
        by_name.setdefault(key, matrix)
    missing = [n for n in names if n not in by_name]
    if missing:
        raise ValidationError(f"unknown layer names: {missing}")
    return [by_name[n] for n in names]
