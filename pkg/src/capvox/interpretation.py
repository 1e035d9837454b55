"""Word-level interpretation of fitted voxel models.

Each caption word's hidden state is pushed through a voxel's linear model
as if it were a pooled feature; words whose lone-state predictions land
closest to the observed response are attributed to the voxel. Counts of
attributed words become frequency tables, deterministic SVG word clouds,
and cosine similarities between voxels.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError

DEFAULT_STOPWORDS = frozenset(
    {"a", "an", "the", "of", "and", "to", "in", "on", "is", "are", "with", "at"}
)

_PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)

# Glyph geometry used for both layout and the documented bounding boxes:
# a token drawn at font size s with baseline anchor (x, y) occupies
# [x, x + 0.6*s*len(token)] horizontally and [y - 0.8*s, y + 0.2*s]
# vertically; textLength pins the rendered width to the box width.
GLYPH_WIDTH_FACTOR = 0.6
GLYPH_ASCENT = 0.8
GLYPH_DESCENT = 0.2


def glyph_box(token: str, size: float, x: float, y: float) -> tuple:
    """Bounding box (x0, y0, x1, y1) of a token at baseline anchor (x, y)."""
    return (
        x,
        y - GLYPH_ASCENT * size,
        x + GLYPH_WIDTH_FACTOR * size * len(token),
        y + GLYPH_DESCENT * size,
    )


@dataclass
class ImageSelection:
    """Ranked per-word prediction errors for one image, plus the top picks."""

    image_id: str
    ranked: list
    selected: list

    def __post_init__(self):
        errors = [e for _, _, e in self.ranked]
        if any(e < 0 for e in errors):
            raise ValidationError("prediction errors must be nonnegative")
        if errors != sorted(errors):
            raise ValidationError("ranked entries must be sorted by ascending error")


@dataclass
class WordAttribution:
    """All per-image selections for one voxel."""

    voxel_id: str
    selections: list


def attribute_words(model, seq, observed: float, k: int = 2) -> ImageSelection:
    """Rank a caption's words by single-state prediction error.

    Every hidden state is standardized with the model's stored parameters
    and evaluated alone; the error is the absolute difference between that
    prediction and the observed voxel response. Ties rank the earlier
    caption position first.
    """
    if int(k) != k or k < 1:
        raise ValidationError("k must be a positive integer")
    observed = float(observed)
    if not math.isfinite(observed):
        raise ValidationError("observed response must be finite")
    if seq.state_dim != model.standardization.dim:
        raise ValidationError(
            f"sequence state dimension {seq.state_dim} does not match the "
            f"model dimension {model.standardization.dim}"
        )
    standardized = model.standardization.apply(seq.states)
    predictions = model.solution.predict(standardized)
    errors = np.abs(predictions - observed)
    order = sorted(range(len(seq.tokens)), key=lambda i: (errors[i], i))
    ranked = [(seq.tokens[i], i, float(errors[i])) for i in order]
    selected = [token for token, _, _ in ranked[: int(k)]]
    return ImageSelection(image_id=seq.image_id, ranked=ranked, selected=selected)


def attribute_voxel(model, seqs, observed_values, k: int = 2) -> WordAttribution:
    """Attribute words for one voxel across a whole test set."""
    seqs = list(seqs)
    observed_values = np.asarray(observed_values, dtype=np.float64).reshape(-1)
    if len(seqs) != observed_values.shape[0]:
        raise ValidationError(
            f"{len(seqs)} sequences but {observed_values.shape[0]} observed values"
        )
    selections = [
        attribute_words(model, seq, obs, k) for seq, obs in zip(seqs, observed_values)
    ]
    return WordAttribution(voxel_id=model.voxel_id, selections=selections)


@dataclass
class WordFrequencyTable:
    """How often each word was attributed to a voxel."""

    voxel_id: str
    counts: dict
    total_selections: int

    def __post_init__(self):
        self.counts = dict(self.counts)
        for token, count in self.counts.items():
            if not isinstance(token, str):
                raise ValidationError("tokens must be strings")
            if int(count) != count or count < 1:
                raise ValidationError(f"count for {token!r} must be a positive integer")
        self.total_selections = int(self.total_selections)
        if sum(self.counts.values()) != self.total_selections:
            raise ValidationError("counts must sum to total_selections")

    def items_by_count(self) -> list:
        """(token, count) pairs, most frequent first, ties alphabetical."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))


def build_frequency_table(voxel_id, attributions, stopwords=DEFAULT_STOPWORDS) -> WordFrequencyTable:
    """Aggregate selected tokens, lowercased, with stopwords removed."""
    if isinstance(attributions, WordAttribution):
        selections = attributions.selections
    else:
        selections = list(attributions)
    if not selections:
        raise ValidationError("no attributions to aggregate")
    stopwords = {w.lower() for w in stopwords} if stopwords else set()
    counts = Counter()
    for selection in selections:
        for token in selection.selected:
            token = token.lower()
            if token not in stopwords:
                counts[token] += 1
    if not counts:
        warnings.warn(
            f"every selected word for voxel {voxel_id!r} was filtered out",
            stacklevel=2,
        )
    return WordFrequencyTable(
        voxel_id=voxel_id, counts=dict(counts), total_selections=sum(counts.values())
    )


def write_frequency_csv(table: WordFrequencyTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["token", "count"])
        writer.writerows(table.items_by_count())


def read_frequency_csv(path, voxel_id: str) -> WordFrequencyTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["token", "count"]:
        raise FormatError("expected header 'token,count'", code="bad-header")
    counts = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise FormatError(
                f"line {lineno}: expected 2 fields, got {len(row)}", code="bad-record"
            )
        token, count = row
        if token in counts:
            raise FormatError(
                f"line {lineno}: duplicate token {token!r}", code="duplicate-token"
            )
        try:
            counts[token] = int(count)
        except ValueError as exc:
            raise FormatError(
                f"line {lineno}: count {count!r} is not an integer", code="bad-record"
            ) from exc
    try:
        return WordFrequencyTable(
            voxel_id=voxel_id, counts=counts, total_selections=sum(counts.values())
        )
    except ValidationError as exc:
        raise FormatError(str(exc), code="bad-record") from exc


def _font_size(count: int, lo: int, hi: int, min_size: float, max_size: float) -> float:
    if hi == lo:
        return max_size
    frac = (count - lo) / (hi - lo)
    return min_size + frac * (max_size - min_size)


def _boxes_overlap(a: tuple, b: tuple, pad: float = 0.0) -> bool:
    return (
        a[0] < b[2] + pad
        and b[0] < a[2] + pad
        and a[1] < b[3] + pad
        and b[1] < a[3] + pad
    )


def render_wordcloud_svg(
    table: WordFrequencyTable,
    *,
    seed: int = 0,
    min_size: float = 12.0,
    max_size: float = 48.0,
) -> str:
    """Render a deterministic word cloud as an SVG string.

    Words are placed most-frequent first along an outward spiral whose
    starting angle comes from the seeded generator, so the same table and
    seed always yield byte-identical output. Font size grows linearly with
    count and no two glyph boxes overlap.
    """
    if not table.counts:
        raise ValidationError(
            "frequency table is empty; relax the stopword list or the "
            "significance threshold"
        )
    items = table.items_by_count()
    counts = [c for _, c in items]
    lo, hi = min(counts), max(counts)
    rng = np.random.default_rng(seed)

    placed = []  # (token, size, x, y, box, color)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    for rank, (token, count) in enumerate(items):
        size = _font_size(count, lo, hi, min_size, max_size)
        w = GLYPH_WIDTH_FACTOR * size * len(token)
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
        spot = None
        for t in range(200000):
            theta = phase + golden * t
            r = 2.8 * math.sqrt(t)
            cx = r * math.cos(theta)
            cy = r * math.sin(theta)
            x = cx - w / 2.0
            y = cy + (GLYPH_ASCENT - GLYPH_DESCENT) / 2.0 * size
            box = glyph_box(token, size, x, y)
            if all(not _boxes_overlap(box, other[4], pad=1.0) for other in placed):
                spot = (x, y, box)
                break
        if spot is None:  # spiral exhausted; should not happen at sane sizes
            raise ValidationError(f"could not place token {token!r}")
        x, y, box = spot
        placed.append((token, size, x, y, box, _PALETTE[rank % len(_PALETTE)]))

    margin = 10.0
    x0 = min(p[4][0] for p in placed) - margin
    y0 = min(p[4][1] for p in placed) - margin
    x1 = max(p[4][2] for p in placed) + margin
    y1 = max(p[4][3] for p in placed) + margin
    width = x1 - x0
    height = y1 - y0

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2f}" '
            f'height="{height:.2f}" viewBox="{x0:.2f} {y0:.2f} {width:.2f} {height:.2f}">'
        ),
    ]
    for token, size, x, y, box, color in placed:
        text_len = box[2] - box[0]
        parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size:.2f}" '
            f'font-family="sans-serif" fill="{color}" textLength="{text_len:.2f}" '
            f'lengthAdjust="spacingAndGlyphs">{_escape(token)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def word_distribution_similarity(a: WordFrequencyTable, b: WordFrequencyTable) -> float:
    """Cosine similarity of two count vectors over the union vocabulary."""
    if not a.counts or not b.counts:
        raise ValidationError("similarity needs two nonempty tables")
    dot = 0
    for token, count in a.counts.items():
        dot += count * b.counts.get(token, 0)
    na2 = sum(c * c for c in a.counts.values())
    nb2 = sum(c * c for c in b.counts.values())
    return dot / math.sqrt(na2 * nb2)


@dataclass
class SimilarityResult:
    """Pairwise similarity matrix plus the strongest cross-group pairs."""

    labels: list
    matrix: np.ndarray
    top_pairs: list


def similarity_matrix(tables, groups=None, top_n: int = 10) -> SimilarityResult:
    """All pairwise similarities; top pairs restricted across groups.

    With ``groups`` given (one label per table), the top-pair listing keeps
    only pairs whose group labels differ, mirroring cross-region and
    cross-subject comparisons. The matrix is exactly symmetric with a unit
    diagonal.
    """
    tables = list(tables)
    if len(tables) < 2:
        raise ValidationError("similarity matrix needs at least two tables")
    if groups is not None:
        groups = list(groups)
        if len(groups) != len(tables):
            raise ValidationError(
                f"{len(groups)} group labels for {len(tables)} tables"
            )
    m = len(tables)
    matrix = np.ones((m, m))
    pairs = []
    for i in range(m):
        for j in range(i + 1, m):
            sim = word_distribution_similarity(tables[i], tables[j])
            matrix[i, j] = sim
            matrix[j, i] = sim
            if groups is None or groups[i] != groups[j]:
                pairs.append((i, j, sim))
    pairs.sort(key=lambda p: (-p[2], p[0], p[1]))
    labels = [t.voxel_id for t in tables]
    top_pairs = [
        (labels[i], labels[j], sim) for i, j, sim in pairs[: int(top_n)]
    ]
    return SimilarityResult(labels=labels, matrix=matrix, top_pairs=top_pairs)
