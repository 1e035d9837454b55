"""Run manifest for one extraction over an image directory."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .model import LAYER_NAMES

DECODE_MODES = ("greedy", "beam")
REDUCTIONS = ("avg2x2", "avg1x1", "flatten")


def _positive_int(value, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValidationError(f"{name} must be a positive integer, got {value!r}")


@dataclass
class ExtractionManifest:
    """What to run: images, weights, layers, decoding, and output paths.

    Output files carry fixed names under ``out_dir`` so repeated runs of
    the same manifest land on the same paths and can be compared byte
    for byte.
    """

    image_dir: str
    checkpoint: str
    layers: tuple = LAYER_NAMES
    decode: str = "greedy"
    beam_width: int = 3
    max_tokens: int = 16
    reduction: str = "avg2x2"
    out_dir: str = "extracted"

    def __post_init__(self):
        self.layers = tuple(self.layers)
        if not self.layers:
            raise ValidationError("manifest needs at least one layer name")
        unknown = [name for name in self.layers if name not in LAYER_NAMES]
        if unknown:
            raise ValidationError(
                f"unknown encoder layers {unknown}; available: {list(LAYER_NAMES)}"
            )
        if len(set(self.layers)) != len(self.layers):
            raise ValidationError("layer list holds duplicate names")
        if self.decode not in DECODE_MODES:
            raise ValidationError(
                f"decode must be one of {DECODE_MODES}, got {self.decode!r}"
            )
        if self.reduction not in REDUCTIONS:
            raise ValidationError(
                f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}"
            )
        _positive_int(self.beam_width, "beam_width")
        _positive_int(self.max_tokens, "max_tokens")

    @property
    def words_path(self) -> Path:
        return Path(self.out_dir) / "words.jsonl"

    @property
    def states_path(self) -> Path:
        return Path(self.out_dir) / "word_states.fmat"

    @property
    def report_path(self) -> Path:
        return Path(self.out_dir) / "run.json"

    def layer_path(self, name: str) -> Path:
        return Path(self.out_dir) / f"features_{name}.fmat"
