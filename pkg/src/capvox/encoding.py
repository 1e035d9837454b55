"""Voxel-wise encoding: one sparse linear model per voxel.

Training standardizes the feature matrix once, fits every voxel column
independently with a greedy sparse solver, and records the shared
standardization so prediction never re-fits it. Model sets persist as a
versioned JSON document.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, FormatError, ValidationError
from .solver import (
    DesignMatrix,
    SolverConfig,
    SparseSolution,
    StandardizationParams,
    _require_finite,
    mp_solve,
    omp_solve,
    romp_solve,
    standardize_columns,
)

ROI_NAMES = ("EV", "LOC", "OPA", "PPA", "RSC")
HEMISPHERES = ("L", "R")

MODELS_FORMAT = "capvox-models"
MODELS_VERSION = 1

_SOLVERS = {"romp": romp_solve, "omp": omp_solve, "mp": mp_solve}


@dataclass(frozen=True)
class VoxelRecord:
    """Identity and anatomical metadata for one voxel."""

    voxel_id: str
    subject: str
    roi: str
    hemisphere: str

    def __post_init__(self):
        if self.roi not in ROI_NAMES:
            raise ValidationError(
                f"voxel {self.voxel_id!r} has unknown roi {self.roi!r}; "
                f"expected one of {ROI_NAMES}"
            )
        if self.hemisphere not in HEMISPHERES:
            raise ValidationError(
                f"voxel {self.voxel_id!r} has unknown hemisphere {self.hemisphere!r}; "
                f"expected one of {HEMISPHERES}"
            )

    @property
    def sub_region(self) -> str:
        return f"{self.roi}-{self.hemisphere}"

    @property
    def level(self) -> str:
        """Low for early visual cortex, high for the four object regions."""
        return "low" if self.roi == "EV" else "high"


def sub_region_names() -> list:
    """All ten roi x hemisphere labels in a fixed order."""
    return [f"{roi}-{hemi}" for roi in ROI_NAMES for hemi in HEMISPHERES]


@dataclass
class VoxelResponseMatrix:
    """n_samples x n_voxels responses with image ids and voxel metadata."""

    values: np.ndarray
    image_ids: list
    voxels: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.image_ids = list(self.image_ids)
        self.voxels = list(self.voxels)
        if self.values.ndim != 2:
            raise ValidationError("response values must be a 2-D matrix")
        if len(self.image_ids) != self.values.shape[0]:
            raise ValidationError(
                f"{len(self.image_ids)} image ids for {self.values.shape[0]} rows"
            )
        if len(self.voxels) != self.values.shape[1]:
            raise ValidationError(
                f"{len(self.voxels)} voxel records for {self.values.shape[1]} columns"
            )
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValidationError("image ids must be unique")
        ids = [v.voxel_id for v in self.voxels]
        if len(set(ids)) != len(ids):
            raise ValidationError("voxel ids must be unique")
        _require_finite(self.values, "response matrix")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_voxels(self) -> int:
        return self.values.shape[1]

    @property
    def voxel_ids(self) -> list:
        return [v.voxel_id for v in self.voxels]


@dataclass
class VoxelEncodingModel:
    """One fitted sparse linear readout for a single voxel.

    ``failed`` marks voxels whose solver run degraded to the mean-only
    fallback so a large run never aborts on one bad column.
    """

    voxel_id: str
    solution: SparseSolution
    standardization: StandardizationParams
    feature_source: str
    feature_dim: int
    failed: bool = False

    def __post_init__(self):
        self.feature_dim = int(self.feature_dim)
        if self.standardization.dim != self.feature_dim:
            raise ValidationError(
                f"model {self.voxel_id!r}: standardization dimension "
                f"{self.standardization.dim} != feature dimension {self.feature_dim}"
            )
        sup = self.solution.support
        if sup.size and (sup.min() < 0 or sup.max() >= self.feature_dim):
            raise ValidationError(
                f"model {self.voxel_id!r}: support indices exceed feature dimension"
            )


@dataclass
class EncodingModelSet:
    """All per-voxel models fitted from one feature matrix."""

    models: list
    feature_source: str
    training_ids: list
    solver_config: SolverConfig
    standardization: StandardizationParams = field(default=None)

    def __post_init__(self):
        self.models = list(self.models)
        self.training_ids = list(self.training_ids)
        if not self.models:
            raise ValidationError("a model set needs at least one voxel model")
        ids = [m.voxel_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate voxel ids in model set")
        for m in self.models:
            if m.feature_source != self.feature_source:
                raise ValidationError(
                    f"model {m.voxel_id!r} has feature source {m.feature_source!r}, "
                    f"set claims {self.feature_source!r}"
                )
        if self.standardization is None:
            self.standardization = self.models[0].standardization

    @property
    def voxel_ids(self) -> list:
        return [m.voxel_id for m in self.models]

    @property
    def feature_dim(self) -> int:
        return self.models[0].feature_dim


def _fit_column(task):
    """Fit one voxel column; picklable for worker pools."""
    index, design, y, cfg, algorithm = task
    try:
        solution = _SOLVERS[algorithm](design, y, cfg)
        return index, solution, False
    except (ValidationError, np.linalg.LinAlgError):
        y_mean = float(np.mean(y))
        fallback = SparseSolution(
            support=np.zeros(0, dtype=np.int64),
            coefficients=np.zeros(0),
            intercept=y_mean,
            residual_norm=float(np.linalg.norm(y - y_mean)),
            iterations=0,
            stop_reason="failed",
        )
        return index, fallback, True


_POOL_STATE = {}


def _pool_init(design, responses, cfg, algorithm):
    _POOL_STATE["args"] = (design, responses, cfg, algorithm)


def _pool_fit(index):
    design, responses, cfg, algorithm = _POOL_STATE["args"]
    return _fit_column((index, design, responses[:, index], cfg, algorithm))


def train_voxelwise(
    features,
    responses: VoxelResponseMatrix,
    cfg: SolverConfig,
    *,
    algorithm: str = "romp",
    center_responses: bool = False,
    workers: int = 1,
) -> EncodingModelSet:
    """Fit one sparse model per voxel on the shared standardized features.

    Inputs must already be aligned (identical image id order). Voxels whose
    solve raises degrade to a flagged mean-only model instead of aborting
    the run. Results are identical for any worker count: each voxel sees
    the same matrix and config regardless of scheduling.
    """
    if algorithm not in _SOLVERS:
        raise ValidationError(
            f"unknown algorithm {algorithm!r}; expected one of {sorted(_SOLVERS)}"
        )
    if list(features.image_ids) != list(responses.image_ids):
        raise AlignmentError(
            "features and responses are not aligned; run align() first"
        )
    if features.values.shape[0] < 2:
        raise ValidationError("training needs at least two samples")
    workers = int(workers)
    if workers < 1:
        raise ValidationError("workers must be a positive integer")

    design, params = standardize_columns(DesignMatrix(features.values))
    y_all = np.asarray(responses.values, dtype=np.float64)
    if center_responses:
        y_all = y_all - y_all.mean(axis=0)

    n_voxels = responses.n_voxels
    if workers == 1:
        results = [
            _fit_column((i, design, y_all[:, i], cfg, algorithm))
            for i in range(n_voxels)
        ]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(
            processes=workers,
            initializer=_pool_init,
            initargs=(design, y_all, cfg, algorithm),
        ) as pool:
            results = pool.map(_pool_fit, range(n_voxels))
    results.sort(key=lambda item: item[0])

    models = [
        VoxelEncodingModel(
            voxel_id=responses.voxels[i].voxel_id,
            solution=solution,
            standardization=params,
            feature_source=features.source,
            feature_dim=features.values.shape[1],
            failed=failed,
        )
        for i, solution, failed in results
    ]
    return EncodingModelSet(
        models=models,
        feature_source=features.source,
        training_ids=list(features.image_ids),
        solver_config=cfg,
        standardization=params,
    )


def predict(modelset: EncodingModelSet, features) -> np.ndarray:
    """n_samples x n_voxels predictions under the stored standardization."""
    values = np.asarray(features.values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != modelset.feature_dim:
        raise ValidationError(
            f"feature dimension {values.shape[-1]} does not match the "
            f"model dimension {modelset.feature_dim}"
        )
    standardized = modelset.standardization.apply(values)
    out = np.empty((values.shape[0], len(modelset.models)))
    for i, model in enumerate(modelset.models):
        out[:, i] = model.solution.predict(standardized)
    return out


def _solution_to_json(model: VoxelEncodingModel) -> dict:
    s = model.solution
    return {
        "voxel_id": model.voxel_id,
        "support": s.support.tolist(),
        "coefficients": s.coefficients.tolist(),
        "intercept": s.intercept,
        "residual_norm": s.residual_norm,
        "iterations": s.iterations,
        "rank_deficient": s.rank_deficient,
        "stop_reason": s.stop_reason,
        "failed": model.failed,
    }


def save_models(modelset: EncodingModelSet, path) -> None:
    """Write the model set as versioned JSON with full float64 precision."""
    cfg = modelset.solver_config
    doc = {
        "format": MODELS_FORMAT,
        "version": MODELS_VERSION,
        "feature_source": modelset.feature_source,
        "feature_dim": modelset.feature_dim,
        "training_ids": list(modelset.training_ids),
        "solver_config": {
            "sparsity_s": cfg.sparsity_s,
            "comparability_ratio": cfg.comparability_ratio,
            "residual_tol": cfg.residual_tol,
            "max_support": cfg.max_support,
        },
        "standardization": {
            "means": modelset.standardization.means.tolist(),
            "stds": modelset.standardization.stds.tolist(),
        },
        "models": [_solution_to_json(m) for m in modelset.models],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")


def load_models(path) -> EncodingModelSet:
    """Read a model file written by :func:`save_models`."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(
            f"model file is not valid JSON at byte offset {exc.pos}: {exc.msg}",
            code="bad-json",
        ) from exc
    if not isinstance(doc, dict) or doc.get("format") != MODELS_FORMAT:
        raise FormatError(
            f"not a model file (missing format tag {MODELS_FORMAT!r})",
            code="bad-document",
        )
    if doc.get("version") != MODELS_VERSION:
        raise FormatError(
            f"unsupported model file version {doc.get('version')!r}; "
            f"this reader handles version {MODELS_VERSION}",
            code="unsupported-version",
        )
    try:
        cfg = SolverConfig(**doc["solver_config"])
        params = StandardizationParams(
            np.asarray(doc["standardization"]["means"]),
            np.asarray(doc["standardization"]["stds"]),
        )
        feature_dim = int(doc["feature_dim"])
        models = []
        for entry in doc["models"]:
            solution = SparseSolution(
                support=np.asarray(entry["support"], dtype=np.int64),
                coefficients=np.asarray(entry["coefficients"], dtype=np.float64),
                intercept=entry["intercept"],
                residual_norm=entry["residual_norm"],
                iterations=entry["iterations"],
                rank_deficient=bool(entry["rank_deficient"]),
                stop_reason=entry["stop_reason"],
            )
            models.append(
                VoxelEncodingModel(
                    voxel_id=entry["voxel_id"],
                    solution=solution,
                    standardization=params,
                    feature_source=doc["feature_source"],
                    feature_dim=feature_dim,
                    failed=bool(entry["failed"]),
                )
            )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"model file is missing field: {exc}", code="bad-document") from exc
    return EncodingModelSet(
        models=models,
        feature_source=doc["feature_source"],
        training_ids=list(doc["training_ids"]),
        solver_config=cfg,
        standardization=params,
    )
