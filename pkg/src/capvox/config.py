"""Shared pipeline configuration with a YAML file loader.

Every CLI stage reads the same config object; command-line flags override
file values. Unknown keys in a config file are rejected outright so typos
never silently fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import yaml

from .errors import ValidationError
from .interpretation import DEFAULT_STOPWORDS


@dataclass
class PipelineConfig:
    state_dim: int = 512
    sparsity_s: int = 16
    comparability_ratio: float = 2.0
    threshold: float = 0.27
    tails: str = "two"
    words_per_image: int = 2
    stopwords: list = field(default_factory=lambda: sorted(DEFAULT_STOPWORDS))
    histogram_bins: int = 40
    seed: int = 0
    worker_count: int = 1

    def __post_init__(self):
        for name in ("state_dim", "sparsity_s", "words_per_image", "histogram_bins", "worker_count"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
            setattr(self, name, int(value))
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {self.seed!r}")
        self.seed = int(self.seed)
        self.comparability_ratio = float(self.comparability_ratio)
        if not math.isfinite(self.comparability_ratio) or self.comparability_ratio < 1:
            raise ValidationError("comparability_ratio must be a real number >= 1")
        self.threshold = float(self.threshold)
        if not math.isfinite(self.threshold):
            raise ValidationError("threshold must be finite")
        if self.tails not in ("one", "two"):
            raise ValidationError(f"tails must be 'one' or 'two', got {self.tails!r}")
        if not isinstance(self.stopwords, (list, tuple, set, frozenset)):
            raise ValidationError("stopwords must be a list of words")
        self.stopwords = [str(w) for w in self.stopwords]


def load_config(path) -> PipelineConfig:
    """Read a YAML config file, rejecting unknown keys."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ValidationError(f"config file is not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a key: value mapping")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(
            f"unknown config keys: {', '.join(unknown)}; "
            f"known keys: {', '.join(sorted(known))}"
        )
    return PipelineConfig(**doc)


def save_config(config: PipelineConfig, path) -> None:
    doc = {f.name: getattr(config, f.name) for f in fields(PipelineConfig)}
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, default_flow_style=False, sort_keys=True)
