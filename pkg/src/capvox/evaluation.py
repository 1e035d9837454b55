"""Pearson-correlation evaluation and two-model comparison statistics.

Per-voxel correlations feed region aggregates (left/right crossed with the
low early-visual group and the high-level group), layer profiles, and the
scatter/fraction/histogram/distance statistics used to compare two model
sets over the same voxels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import FormatError, ValidationError
from .features import source_layer
from .encoding import (
    EncodingModelSet,
    VoxelRecord,
    VoxelResponseMatrix,
    predict,
    sub_region_names,
)

REPORT_FORMAT = "capvox-report"
REPORT_VERSION = 1

CLASS_NEITHER = "neither_significant"
CLASS_A_BETTER = "a_better"
CLASS_B_BETTER = "b_better"
CLASS_TIE = "tie"


def pearson(x, y) -> float:
    """Centered product-moment correlation; NaN when either side is constant."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValidationError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 3:
        raise ValidationError("pearson needs at least 3 samples")
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise ValidationError("pearson inputs must be finite")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(dx @ dx)
    sy = float(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        return float("nan")
    r = float(dx @ dy) / math.sqrt(sx * sy)
    return min(1.0, max(-1.0, r))


def significance_threshold(n_test: int, p: float, tails: str = "two") -> float:
    """Correlation magnitude matching a Student-t tail probability.

    Solves t = r sqrt(n-2)/sqrt(1-r**2) for r at the inverse-CDF quantile,
    i.e. r = t/sqrt(n-2+t**2) with df = n-2.
    """
    if int(n_test) != n_test or n_test < 4:
        raise ValidationError("n_test must be an integer >= 4")
    if not 0 < p < 1:
        raise ValidationError("p must lie strictly between 0 and 1")
    if tails not in ("one", "two"):
        raise ValidationError(f"tails must be 'one' or 'two', got {tails!r}")
    df = int(n_test) - 2
    q = p / 2 if tails == "two" else p
    t = float(stats.t.ppf(1.0 - q, df))
    return t / math.sqrt(df + t * t)


_LEVELS = ("low", "high")
_HEMIS = ("L", "R")


def _region_keys() -> list:
    keys = ["all"]
    keys += [f"{h}/{lv}" for h in _HEMIS for lv in _LEVELS]
    keys += sub_region_names()
    return keys


def _group_means(pcs: np.ndarray, voxels) -> dict:
    finite = np.isfinite(pcs)

    def mean_over(mask) -> float:
        mask = mask & finite
        return float(pcs[mask].mean()) if mask.any() else float("nan")

    hemi = np.asarray([v.hemisphere for v in voxels])
    level = np.asarray([v.level for v in voxels])
    sub = np.asarray([v.sub_region for v in voxels])
    means = {"all": mean_over(np.ones(len(voxels), dtype=bool))}
    for h in _HEMIS:
        for lv in _LEVELS:
            means[f"{h}/{lv}"] = mean_over((hemi == h) & (level == lv))
    for name in sub_region_names():
        means[name] = mean_over(sub == name)
    return means


@dataclass
class EvaluationReport:
    """Per-voxel correlations plus aggregate means for one model set."""

    per_voxel_pc: np.ndarray
    voxels: list
    feature_source: str
    n_test: int
    region_means: dict = field(default=None)
    degenerate_count: int = field(default=None)

    def __post_init__(self):
        self.per_voxel_pc = np.asarray(self.per_voxel_pc, dtype=np.float64).reshape(-1)
        self.voxels = list(self.voxels)
        if self.per_voxel_pc.shape[0] != len(self.voxels):
            raise ValidationError(
                f"{self.per_voxel_pc.shape[0]} correlations for {len(self.voxels)} voxels"
            )
        finite = self.per_voxel_pc[np.isfinite(self.per_voxel_pc)]
        if finite.size and (np.abs(finite) > 1.0 + 1e-12).any():
            raise ValidationError("correlations must lie in [-1, 1]")
        ids = [v.voxel_id for v in self.voxels]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate voxel ids in report")
        self.n_test = int(self.n_test)
        # Aggregates are derived, never trusted from a caller.
        self.degenerate_count = int((~np.isfinite(self.per_voxel_pc)).sum())
        self.region_means = _group_means(self.per_voxel_pc, self.voxels)

    @property
    def voxel_ids(self) -> list:
        return [v.voxel_id for v in self.voxels]

    @property
    def layer_name(self) -> str:
        layer = source_layer(self.feature_source)
        return layer if layer is not None else self.feature_source


def evaluate(
    modelset: EncodingModelSet,
    test_features,
    test_responses: VoxelResponseMatrix,
) -> EvaluationReport:
    """Correlate predicted and observed responses per voxel on a test split."""
    if list(test_features.image_ids) != list(test_responses.image_ids):
        raise ValidationError(
            "test features and responses are not aligned; run align() first"
        )
    if modelset.voxel_ids != test_responses.voxel_ids:
        raise ValidationError("model set and responses cover different voxels")
    n_test = test_responses.n_samples
    if n_test < 3:
        raise ValidationError("evaluation needs at least 3 test samples")
    predicted = predict(modelset, test_features)
    pcs = np.empty(test_responses.n_voxels)
    for v in range(test_responses.n_voxels):
        pcs[v] = pearson(predicted[:, v], test_responses.values[:, v])
    return EvaluationReport(
        per_voxel_pc=pcs,
        voxels=test_responses.voxels,
        feature_source=modelset.feature_source,
        n_test=n_test,
    )


@dataclass
class LayerProfile:
    """Mean PC per layer per region grouping, in layer order."""

    layers: list
    region_means: dict

    def rows(self) -> list:
        keys = [k for k in _region_keys() if k in self.region_means]
        out = []
        for i, layer in enumerate(self.layers):
            row = {"layer": layer}
            for k in keys:
                row[k] = self.region_means[k][i]
            out.append(row)
        return out


def layer_profile(reports) -> LayerProfile:
    """Stack per-region mean PCs across an ordered list of reports."""
    reports = list(reports)
    if not reports:
        raise ValidationError("layer_profile needs at least one report")
    voxels = reports[0].voxels
    for rep in reports[1:]:
        if rep.voxels != voxels:
            raise ValidationError("reports cover different voxel sets")
    layers = [rep.layer_name for rep in reports]
    means = {
        key: [rep.region_means[key] for rep in reports] for key in _region_keys()
    }
    return LayerProfile(layers=layers, region_means=means)


def best_layer(profile: LayerProfile, region: str) -> str:
    """Layer with the highest mean PC for a region; ties go to the earliest."""
    if region not in profile.region_means:
        raise ValidationError(
            f"unknown region {region!r}; expected one of {sorted(profile.region_means)}"
        )
    if not profile.layers:
        raise ValidationError("profile has no layers")
    means = profile.region_means[region]
    best_idx = None
    best_val = -math.inf
    for i, val in enumerate(means):
        if math.isfinite(val) and val > best_val:
            best_idx, best_val = i, val
    if best_idx is None:
        raise ValidationError(f"region {region!r} has no finite mean PC")
    return profile.layers[best_idx]


@dataclass
class ComparisonReport:
    """Fig-4-style classification and summary statistics for two reports."""

    voxels: list
    pc_a: np.ndarray
    pc_b: np.ndarray
    classification: list
    threshold: float
    n_jointly_significant: int
    fraction_a_better: float
    fraction_b_better: float
    fraction_tie: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    sub_region_mean_abs_delta: dict
    excluded_voxels: int

    @property
    def voxel_ids(self) -> list:
        return [v.voxel_id for v in self.voxels]


def compare(report_a: EvaluationReport, report_b: EvaluationReport, threshold: float, *, bins: int = 40) -> ComparisonReport:
    """Classify voxels and summarize PC differences between two model sets.

    A voxel where neither PC clears the threshold is 'neither_significant';
    otherwise the larger PC wins, with NaN losing to any value and an exact
    equality counted as a tie. Fractions and the difference histogram cover
    only jointly significant voxels; sub-region mean absolute differences
    cover every voxel with two finite PCs.
    """
    if report_a.voxel_ids != report_b.voxel_ids:
        raise ValidationError("reports cover different voxel sets")
    if int(bins) != bins or bins < 1:
        raise ValidationError("bins must be a positive integer")
    bins = int(bins)
    threshold = float(threshold)
    pc_a = report_a.per_voxel_pc
    pc_b = report_b.per_voxel_pc
    sig_a = np.where(np.isfinite(pc_a), pc_a >= threshold, False)
    sig_b = np.where(np.isfinite(pc_b), pc_b >= threshold, False)
    # NaN compares as minus infinity so a degenerate model never wins.
    cmp_a = np.where(np.isfinite(pc_a), pc_a, -np.inf)
    cmp_b = np.where(np.isfinite(pc_b), pc_b, -np.inf)

    classification = []
    for i in range(len(pc_a)):
        if not sig_a[i] and not sig_b[i]:
            classification.append(CLASS_NEITHER)
        elif cmp_a[i] > cmp_b[i]:
            classification.append(CLASS_A_BETTER)
        elif cmp_b[i] > cmp_a[i]:
            classification.append(CLASS_B_BETTER)
        else:
            classification.append(CLASS_TIE)

    joint = sig_a & sig_b
    n_joint = int(joint.sum())
    labels = np.asarray(classification)
    if n_joint:
        fraction_a = float((labels[joint] == CLASS_A_BETTER).sum() / n_joint)
        fraction_b = float((labels[joint] == CLASS_B_BETTER).sum() / n_joint)
        fraction_tie = float((labels[joint] == CLASS_TIE).sum() / n_joint)
        deltas = pc_a[joint] - pc_b[joint]
        half = float(np.abs(deltas).max())
        if half == 0.0:
            half = 1.0  # all differences vanish; any symmetric range works
        edges = np.linspace(-half, half, bins + 1)
        counts, _ = np.histogram(deltas, bins=edges)
    else:
        fraction_a = fraction_b = fraction_tie = float("nan")
        edges = np.zeros(0)
        counts = np.zeros(0, dtype=np.int64)

    both_finite = np.isfinite(pc_a) & np.isfinite(pc_b)
    abs_delta = np.abs(pc_a - pc_b)
    sub = np.asarray([v.sub_region for v in report_a.voxels])
    sub_means = {}
    for name in sub_region_names():
        mask = (sub == name) & both_finite
        sub_means[name] = float(abs_delta[mask].mean()) if mask.any() else float("nan")

    return ComparisonReport(
        voxels=list(report_a.voxels),
        pc_a=pc_a.copy(),
        pc_b=pc_b.copy(),
        classification=classification,
        threshold=threshold,
        n_jointly_significant=n_joint,
        fraction_a_better=fraction_a,
        fraction_b_better=fraction_b,
        fraction_tie=fraction_tie,
        histogram_edges=edges,
        histogram_counts=counts,
        sub_region_mean_abs_delta=sub_means,
        excluded_voxels=int((~both_finite).sum()),
    )


def _float_str(x: float) -> str:
    return repr(float(x))


def _none_if_nan(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def _evaluation_json(report: EvaluationReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "kind": "evaluation",
        "feature_source": report.feature_source,
        "n_test": report.n_test,
        "degenerate_count": report.degenerate_count,
        "region_means": {k: _none_if_nan(v) for k, v in report.region_means.items()},
        "voxels": [
            {
                "voxel_id": v.voxel_id,
                "subject": v.subject,
                "roi": v.roi,
                "hemisphere": v.hemisphere,
                "pc": _none_if_nan(pc),
            }
            for v, pc in zip(report.voxels, report.per_voxel_pc)
        ],
    }


def _comparison_json(report: ComparisonReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "kind": "comparison",
        "threshold": report.threshold,
        "n_jointly_significant": report.n_jointly_significant,
        "fraction_a_better": _none_if_nan(report.fraction_a_better),
        "fraction_b_better": _none_if_nan(report.fraction_b_better),
        "fraction_tie": _none_if_nan(report.fraction_tie),
        "histogram": {
            "edges": [float(e) for e in report.histogram_edges],
            "counts": [int(c) for c in report.histogram_counts],
        },
        "sub_region_mean_abs_delta": {
            k: _none_if_nan(v) for k, v in report.sub_region_mean_abs_delta.items()
        },
        "excluded_voxels": report.excluded_voxels,
        "voxels": [
            {
                "voxel_id": v.voxel_id,
                "subject": v.subject,
                "roi": v.roi,
                "hemisphere": v.hemisphere,
                "pc_a": _none_if_nan(a),
                "pc_b": _none_if_nan(b),
                "classification": c,
            }
            for v, a, b, c in zip(
                report.voxels, report.pc_a, report.pc_b, report.classification
            )
        ],
    }


def export_report(report, format: str, path) -> None:
    """Write an evaluation or comparison report as CSV or JSON.

    CSV carries one row per voxel with shortest round-trip float text;
    JSON is the schema-documented document with NaN encoded as null.
    """
    if format not in ("csv", "json"):
        raise ValidationError(f"unknown format {format!r}; expected 'csv' or 'json'")
    if isinstance(report, EvaluationReport):
        if format == "json":
            doc = _evaluation_json(report)
        else:
            header = ["voxel_id", "subject", "roi", "hemisphere", "pc"]
            rows = [
                [v.voxel_id, v.subject, v.roi, v.hemisphere, _float_str(pc)]
                for v, pc in zip(report.voxels, report.per_voxel_pc)
            ]
    elif isinstance(report, ComparisonReport):
        if format == "json":
            doc = _comparison_json(report)
        else:
            header = [
                "voxel_id",
                "subject",
                "roi",
                "hemisphere",
                "pc_a",
                "pc_b",
                "classification",
            ]
            rows = [
                [
                    v.voxel_id,
                    v.subject,
                    v.roi,
                    v.hemisphere,
                    _float_str(a),
                    _float_str(b),
                    c,
                ]
                for v, a, b, c in zip(
                    report.voxels, report.pc_a, report.pc_b, report.classification
                )
            ]
    else:
        raise ValidationError(f"cannot export object of type {type(report).__name__}")

    if format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1, allow_nan=False)
            fh.write("\n")
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)


def read_report(path) -> EvaluationReport:
    """Load an evaluation report written by :func:`export_report` (JSON)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(
            f"report file is not valid JSON at byte offset {exc.pos}: {exc.msg}",
            code="bad-json",
        ) from exc
    if not isinstance(doc, dict) or doc.get("format") != REPORT_FORMAT:
        raise FormatError("not a report file", code="bad-document")
    if doc.get("version") != REPORT_VERSION:
        raise FormatError(
            f"unsupported report version {doc.get('version')!r}",
            code="unsupported-version",
        )
    if doc.get("kind") != "evaluation":
        raise FormatError(
            f"expected an evaluation report, found kind {doc.get('kind')!r}",
            code="wrong-kind",
        )
    try:
        voxels = [
            VoxelRecord(e["voxel_id"], e["subject"], e["roi"], e["hemisphere"])
            for e in doc["voxels"]
        ]
        pcs = [
            float("nan") if e["pc"] is None else float(e["pc"]) for e in doc["voxels"]
        ]
        return EvaluationReport(
            per_voxel_pc=np.asarray(pcs),
            voxels=voxels,
            feature_source=doc["feature_source"],
            n_test=doc["n_test"],
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"report file is missing field: {exc}", code="bad-document") from exc
