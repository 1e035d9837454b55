"""Greedy sparse solvers: matching pursuit, OMP, and regularized OMP.

All solvers share the same least-squares and standardization primitives,
handle the intercept by centering (never an explicit ones column), and
break every tie toward the lowest column index so repeated runs are
reproducible bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "DesignMatrix",
    "StandardizationParams",
    "SolverConfig",
    "SparseSolution",
    "LeastSquaresFit",
    "standardize_columns",
    "least_squares_on_support",
    "regularize_select",
    "romp_solve",
    "omp_solve",
    "mp_solve",
]


def _require_finite(arr: np.ndarray, what: str) -> None:
    if np.isfinite(arr).all():
        return
    bad = np.argwhere(~np.isfinite(arr))[0]
    if arr.ndim == 2:
        raise ValidationError(
            f"{what} contains a non-finite entry at row {bad[0]}, column {bad[1]}"
        )
    raise ValidationError(f"{what} contains a non-finite entry at index {bad[0]}")


@dataclass
class DesignMatrix:
    """Dense n_samples x d design with one identifier per column."""

    values: np.ndarray
    column_ids: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError("design matrix must be two-dimensional")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValidationError("design matrix needs at least one row and one column")
        _require_finite(values, "design matrix")
        ids = tuple(self.column_ids) if self.column_ids else tuple(
            f"c{i}" for i in range(values.shape[1])
        )
        if len(ids) != values.shape[1]:
            raise ValidationError(
                f"got {len(ids)} column ids for {values.shape[1]} columns"
            )
        self.values = values
        self.column_ids = ids

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]


@dataclass
class StandardizationParams:
    """Per-column means and strictly positive scale factors."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        if self.means.ndim != 1 or self.means.shape != self.stds.shape:
            raise ValidationError("means and stds must be matching 1-D vectors")
        _require_finite(self.means, "standardization means")
        _require_finite(self.stds, "standardization stds")
        if not np.all(self.stds > 0):
            raise ValidationError("standardization stds must be strictly positive")

    @property
    def dim(self) -> int:
        return self.means.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "StandardizationParams":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != self.dim:
            raise ValidationError(
                f"expected trailing dimension {self.dim}, got {values.shape[-1]}"
            )
        return (values - self.means) / self.stds

    def invert(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != self.dim:
            raise ValidationError(
                f"expected trailing dimension {self.dim}, got {values.shape[-1]}"
            )
        return values * self.stds + self.means


@dataclass
class SolverConfig:
    """Shared knobs for the greedy solvers.

    ``max_support`` defaults to twice the sparsity level, which is the
    classic support cap for regularized OMP.
    """

    sparsity_s: int
    comparability_ratio: float = 2.0
    residual_tol: float = 1e-10
    max_support: int | None = None

    def __post_init__(self):
        if int(self.sparsity_s) != self.sparsity_s or self.sparsity_s < 1:
            raise ValidationError("sparsity_s must be a positive integer")
        self.sparsity_s = int(self.sparsity_s)
        self.comparability_ratio = float(self.comparability_ratio)
        if not np.isfinite(self.comparability_ratio) or self.comparability_ratio < 1:
            raise ValidationError("comparability_ratio must be a real number >= 1")
        self.residual_tol = float(self.residual_tol)
        if not np.isfinite(self.residual_tol) or self.residual_tol < 0:
            raise ValidationError("residual_tol must be nonnegative")
        if self.max_support is None:
            self.max_support = 2 * self.sparsity_s
        if int(self.max_support) != self.max_support or self.max_support < self.sparsity_s:
            raise ValidationError("max_support must be an integer >= sparsity_s")
        self.max_support = int(self.max_support)


@dataclass
class SparseSolution:
    """Support, coefficients, and fit diagnostics for one solve."""

    support: np.ndarray
    coefficients: np.ndarray
    intercept: float
    residual_norm: float
    iterations: int
    rank_deficient: bool = False
    stop_reason: str = ""

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64).reshape(-1)
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if self.support.size and (np.diff(self.support) <= 0).any():
            raise ValidationError("support must be sorted and free of duplicates")
        if self.support.size and self.support[0] < 0:
            raise ValidationError("support indices must be nonnegative")
        if self.support.shape != self.coefficients.shape:
            raise ValidationError("support and coefficients must align")
        self.intercept = float(self.intercept)
        self.residual_norm = float(self.residual_norm)
        if self.residual_norm < 0:
            raise ValidationError("residual_norm must be nonnegative")
        self.iterations = int(self.iterations)
        if self.iterations < 0:
            raise ValidationError("iterations must be nonnegative")

    def predict(self, values: np.ndarray) -> np.ndarray:
        """Evaluate the linear model on rows living in the fitted space."""
        values = np.asarray(values, dtype=np.float64)
        if self.support.size == 0:
            return np.full(values.shape[0], self.intercept)
        return self.intercept + values[:, self.support] @ self.coefficients


@dataclass
class LeastSquaresFit:
    coefficients: np.ndarray
    intercept: float
    residual: np.ndarray
    rank_deficient: bool = False


def _as_design(X) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    return DesignMatrix(np.asarray(X))


def _as_response(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n_samples:
        raise ValidationError(
            f"response has {y.shape[0]} entries but the design has {n_samples} rows"
        )
    _require_finite(y, "response vector")
    return y


def _as_support(support, n_columns: int) -> np.ndarray:
    idx = np.asarray(list(support), dtype=np.int64).reshape(-1)
    if idx.size != np.unique(idx).size:
        raise ValidationError("support indices must be distinct")
    if idx.size and (idx.min() < 0 or idx.max() >= n_columns):
        raise ValidationError(
            f"support indices must lie in [0, {n_columns}), got {idx.tolist()}"
        )
    return idx


def standardize_columns(X) -> tuple[DesignMatrix, StandardizationParams]:
    """Center every column; scale non-constant columns to unit population std.

    Constant columns are centered to exactly zero and recorded with std 1
    so that inversion stays well-defined and their coefficients vanish.
    """
    X = _as_design(X)
    values = X.values
    means = values.mean(axis=0)
    constant = np.ptp(values, axis=0) == 0
    # For constant columns the stored mean is the constant itself, which
    # makes apply() produce exact zeros and invert() exact originals.
    means = np.where(constant, values[0], means)
    stds = values.std(axis=0)
    stds = np.where(constant, 1.0, stds)
    params = StandardizationParams(means, stds)
    return DesignMatrix((values - means) / stds, X.column_ids), params


def least_squares_on_support(X, y, support) -> LeastSquaresFit:
    """Exact least squares restricted to ``support``, plus an intercept.

    The returned residual is orthogonal to the selected columns and to the
    constant column. A rank-deficient selection falls back to the
    minimum-norm solution and sets ``rank_deficient`` instead of raising:
    correlated deep features make near-collinearity routine.
    """
    X = _as_design(X)
    y = _as_response(y, X.n_samples)
    support = _as_support(support, X.n_columns)
    if support.size > X.n_samples:
        raise ValidationError(
            f"support size {support.size} exceeds the {X.n_samples} available samples"
        )
    y_mean = float(y.mean())
    if support.size == 0:
        return LeastSquaresFit(np.zeros(0), y_mean, y - y_mean, False)
    cols = X.values[:, support]
    col_means = cols.mean(axis=0)
    centered = cols - col_means
    coef, _, rank, _ = np.linalg.lstsq(centered, y - y_mean, rcond=None)
    intercept = y_mean - float(col_means @ coef)
    residual = (y - y_mean) - centered @ coef
    return LeastSquaresFit(coef, intercept, residual, bool(rank < support.size))


def regularize_select(u: dict, ratio: float) -> list:
    """Pick the maximal-energy subset whose magnitudes are pairwise comparable.

    Candidates are scanned as contiguous windows of the magnitude-sorted
    list (contiguous windows are enough: any comparable subset sits inside
    one of at least equal energy). Every pair in the result satisfies
    ``mag_i <= ratio * mag_j``. Equal-energy windows resolve by preferring
    the window holding the largest magnitude, then fewer members, then
    lower indices.
    """
    if not u:
        raise ValidationError("candidate map is empty")
    ratio = float(ratio)
    if not np.isfinite(ratio) or ratio < 1:
        raise ValidationError("comparability ratio must be a real number >= 1")
    items = []
    for idx, mag in u.items():
        mag = float(mag)
        if not np.isfinite(mag) or mag < 0:
            raise ValidationError(f"candidate {idx} has invalid magnitude {mag}")
        items.append((int(idx), mag))
    items.sort(key=lambda t: (-t[1], t[0]))
    if items[0][1] == 0.0:
        warnings.warn(
            "all candidate magnitudes are zero; returning the lowest index",
            RuntimeWarning,
            stacklevel=2,
        )
        return [min(i for i, _ in items)]

    best_key = None
    best_window = None
    m = len(items)
    for start in range(m):
        high = items[start][1]
        if high == 0.0:
            break  # zero magnitudes cannot pair with anything nonzero
        energy = 0.0
        for end in range(start, m):
            low = items[end][1]
            if high > ratio * low:
                break
            energy += low * low
            window = items[start : end + 1]
            key = (
                -energy,
                -high,
                end - start + 1,
                tuple(sorted(i for i, _ in window)),
            )
            if best_key is None or key < best_key:
                best_key = key
                best_window = window
    return sorted(i for i, _ in best_window)


def _prepare(X, y, cfg: SolverConfig, standardize: bool):
    X = _as_design(X)
    if not isinstance(cfg, SolverConfig):
        raise ValidationError("cfg must be a SolverConfig")
    if standardize:
        X, _ = standardize_columns(X)
    y = _as_response(y, X.n_samples)
    if X.n_samples <= cfg.sparsity_s:
        raise ValidationError(
            f"need more samples ({X.n_samples}) than the sparsity level ({cfg.sparsity_s})"
        )
    return X, y


def _record(trace, support, fit):
    if trace is not None:
        trace.append(
            {
                "support": tuple(support),
                "residual": fit.residual.copy(),
                "coefficients": fit.coefficients.copy(),
                "intercept": fit.intercept,
            }
        )


def _ranked_indices(mags: np.ndarray) -> np.ndarray:
    # Sort by descending magnitude, ascending index on ties.
    return np.lexsort((np.arange(mags.shape[0]), -mags))


def romp_solve(X, y, cfg: SolverConfig, *, standardize: bool = False, trace=None) -> SparseSolution:
    """Regularized orthogonal matching pursuit.

    Each round correlates all columns with the current residual, keeps the
    ``sparsity_s`` strongest nonzero magnitudes, reduces them to the
    maximal-energy comparable subset, merges that subset into the running
    support (strongest first, capped at ``max_support``), re-projects by
    least squares, and recomputes the residual. Stops when the support is
    full, the residual is small enough, correlations vanish, or no new
    column can be added.
    """
    X, y = _prepare(X, y, cfg, standardize)
    support: list[int] = []
    fit = least_squares_on_support(X, y, support)
    residual = fit.residual
    residual_norm = float(np.linalg.norm(residual))
    rank_deficient = False
    iterations = 0
    stop = "residual_tol" if residual_norm <= cfg.residual_tol else ""

    while not stop:
        mags = np.abs(X.values.T @ residual)
        ranked = _ranked_indices(mags)
        candidates = [int(j) for j in ranked[: cfg.sparsity_s] if mags[j] > 0.0]
        if not candidates:
            stop = "zero-correlations"
            break
        chosen = regularize_select(
            {j: float(mags[j]) for j in candidates}, cfg.comparability_ratio
        )
        in_support = set(support)
        fresh = [j for j in sorted(chosen, key=lambda j: (-mags[j], j)) if j not in in_support]
        fresh = fresh[: cfg.max_support - len(support)]
        if not fresh:
            stop = "no-progress"
            break
        support = sorted(support + fresh)
        fit = least_squares_on_support(X, y, support)
        residual = fit.residual
        rank_deficient = rank_deficient or fit.rank_deficient
        iterations += 1
        _record(trace, support, fit)
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm <= cfg.residual_tol:
            stop = "residual_tol"
        elif len(support) >= cfg.max_support:
            stop = "max_support"

    return SparseSolution(
        support=np.asarray(support, dtype=np.int64),
        coefficients=fit.coefficients,
        intercept=fit.intercept,
        residual_norm=residual_norm,
        iterations=iterations,
        rank_deficient=rank_deficient,
        stop_reason=stop,
    )


def omp_solve(X, y, cfg: SolverConfig, *, standardize: bool = False, trace=None) -> SparseSolution:
    """Orthogonal matching pursuit: one new column per round, full re-projection.

    A column is never selected twice; stopping mirrors :func:`romp_solve`.
    """
    X, y = _prepare(X, y, cfg, standardize)
    support: list[int] = []
    fit = least_squares_on_support(X, y, support)
    residual = fit.residual
    residual_norm = float(np.linalg.norm(residual))
    rank_deficient = False
    iterations = 0
    stop = "residual_tol" if residual_norm <= cfg.residual_tol else ""

    while not stop:
        mags = np.abs(X.values.T @ residual)
        if support:
            mags[support] = -1.0  # already selected; never revisit
        j = int(_ranked_indices(mags)[0])
        if mags[j] <= 0.0:
            stop = "zero-correlations"
            break
        support = sorted(support + [j])
        fit = least_squares_on_support(X, y, support)
        residual = fit.residual
        rank_deficient = rank_deficient or fit.rank_deficient
        iterations += 1
        _record(trace, support, fit)
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm <= cfg.residual_tol:
            stop = "residual_tol"
        elif len(support) >= cfg.max_support:
            stop = "max_support"

    return SparseSolution(
        support=np.asarray(support, dtype=np.int64),
        coefficients=fit.coefficients,
        intercept=fit.intercept,
        residual_norm=residual_norm,
        iterations=iterations,
        rank_deficient=rank_deficient,
        stop_reason=stop,
    )


def mp_solve(X, y, cfg: SolverConfig, *, standardize: bool = False) -> SparseSolution:
    """Plain matching pursuit: greedy coefficient updates, no re-projection.

    The same column may be revisited, so iterations are capped at
    ``16 * max_support`` in addition to the residual and support stops.
    """
    X, y = _prepare(X, y, cfg, standardize)
    col_means = X.values.mean(axis=0)
    centered = X.values - col_means
    energies = np.einsum("ij,ij->j", centered, centered)
    y_mean = float(y.mean())
    residual = y - y_mean
    coefs: dict[int, float] = {}
    iterations = 0
    cap = 16 * cfg.max_support
    stop = ""

    while True:
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm <= cfg.residual_tol:
            stop = "residual_tol"
            break
        if iterations >= cap:
            stop = "iteration-cap"
            break
        corr = centered.T @ residual
        mags = np.abs(corr)
        j = int(_ranked_indices(mags)[0])
        if mags[j] == 0.0:
            stop = "zero-correlations"
            break
        if j not in coefs and len(coefs) >= cfg.max_support:
            stop = "max_support"
            break
        step = float(corr[j] / energies[j])
        coefs[j] = coefs.get(j, 0.0) + step
        residual = residual - step * centered[:, j]
        iterations += 1

    support = np.asarray(sorted(coefs), dtype=np.int64)
    coefficients = np.asarray([coefs[j] for j in support], dtype=np.float64)
    intercept = y_mean - float(col_means[support] @ coefficients) if support.size else y_mean
    return SparseSolution(
        support=support,
        coefficients=coefficients,
        intercept=intercept,
        residual_norm=float(np.linalg.norm(residual)),
        iterations=iterations,
        rank_deficient=False,
        stop_reason=stop,
    )
