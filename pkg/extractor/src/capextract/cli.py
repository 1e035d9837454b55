"""Command-line feature extractor.

Subcommands create a seeded captioner checkpoint, decode captions into
word-state files, dump reduced encoder-layer features, and convert
dense arrays to the shared matrix container. Exit codes: 0 success, 1
validation failure, 2 I/O failure, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys

from capvox.errors import ValidationError as InterchangeError

from . import __version__
from .convert import convert_arrays
from .errors import ValidationError
from .extract import extract_layer_features, extract_word_states
from .manifest import DECODE_MODES, REDUCTIONS, ExtractionManifest
from .model import LAYER_NAMES, init_model, save_checkpoint


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures follow the exit-code contract."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _add_run_flags(parser) -> None:
    parser.add_argument("--images", required=True, help="image directory")
    parser.add_argument("--checkpoint", required=True, help="captioner checkpoint")
    parser.add_argument("--out-dir", required=True, help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="capextract", description=__doc__)
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    init_p = sub.add_parser(
        "init-checkpoint", help="write a seeded captioner checkpoint"
    )
    init_p.add_argument("--out", required=True, help="checkpoint path to write")
    init_p.add_argument("--seed", type=int, default=0)
    init_p.set_defaults(func=_cmd_init_checkpoint)

    words = sub.add_parser(
        "word-states", help="decode captions and dump per-word hidden states"
    )
    _add_run_flags(words)
    words.add_argument("--decode", choices=DECODE_MODES, default="greedy")
    words.add_argument("--beam-width", type=int, default=3)
    words.add_argument("--max-tokens", type=int, default=16)
    words.set_defaults(func=_cmd_word_states)

    layers = sub.add_parser(
        "layer-features", help="dump reduced encoder activations per stage"
    )
    _add_run_flags(layers)
    layers.add_argument(
        "--layers",
        default=",".join(LAYER_NAMES),
        help="comma-separated encoder stage names",
    )
    layers.add_argument("--reduction", choices=REDUCTIONS, default="avg2x2")
    layers.set_defaults(func=_cmd_layer_features)

    conv = sub.add_parser(
        "convert", help="convert a .npy matrix to the matrix container"
    )
    conv.add_argument("path_in")
    conv.add_argument("path_out")
    conv.add_argument("--dtype", choices=("f32", "f64"), default=None)
    conv.set_defaults(func=_cmd_convert)
    return parser


def _cmd_init_checkpoint(args) -> int:
    save_checkpoint(init_model(args.seed), args.out)
    print(f"wrote checkpoint -> {args.out}")
    return 0


def _cmd_word_states(args) -> int:
    manifest = ExtractionManifest(
        image_dir=args.images,
        checkpoint=args.checkpoint,
        decode=args.decode,
        beam_width=args.beam_width,
        max_tokens=args.max_tokens,
        out_dir=args.out_dir,
    )
    report = extract_word_states(manifest)
    print(
        f"captioned {len(report['images'])} images "
        f"({len(report['skipped'])} skipped) -> {args.out_dir}"
    )
    return 0


def _cmd_layer_features(args) -> int:
    names = tuple(name for name in args.layers.split(",") if name)
    manifest = ExtractionManifest(
        image_dir=args.images,
        checkpoint=args.checkpoint,
        layers=names,
        reduction=args.reduction,
        out_dir=args.out_dir,
    )
    report = extract_layer_features(manifest)
    print(
        f"wrote {len(report['outputs'])} feature files "
        f"({len(report['skipped'])} images skipped) -> {args.out_dir}"
    )
    return 0


def _cmd_convert(args) -> int:
    tag = convert_arrays(args.path_in, args.path_out, dtype=args.dtype)
    print(f"wrote {args.path_out} as {tag}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help and --version exit directly
            return int(exc.code or 0)
        return int(args.func(args) or 0)
    except (ValidationError, InterchangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
