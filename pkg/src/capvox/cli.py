"""Command-line pipeline driver.

Every stage of the toolkit is a subcommand reading the shared YAML config
(``--config``); explicit flags always win over config values. Exit codes:
0 success, 1 validation failure, 2 I/O failure, 3 internal error. With
``--error-json`` failures are also emitted as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .config import PipelineConfig, load_config
from .encoding import (
    load_models,
    predict,
    save_models,
    train_voxelwise,
)
from .errors import ValidationError
from .evaluation import (
    best_layer,
    compare,
    evaluate,
    export_report,
    layer_profile,
    pearson,
    read_report,
    significance_threshold,
)
from .features import FeatureMatrix, ICF_SOURCE, align, build_feature_matrix
from .interchange import (
    read_fmat,
    read_responses,
    read_word_states,
    write_fmat,
)
from .interpretation import (
    attribute_voxel,
    build_frequency_table,
    read_frequency_csv,
    render_wordcloud_svg,
    write_frequency_csv,
)
from .synth import generate_bundle


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures follow the exit-code contract."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _add_common(sub):
    sub.add_argument("--config", help="YAML pipeline config; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capvox", description=__doc__)
    parser.add_argument("--version", action="version", version=f"capvox {__version__}")
    parser.add_argument(
        "--error-json",
        action="store_true",
        help="emit failures as a JSON object on stderr",
    )
    subs = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = subs.add_parser(
        "pool",
        help="pool word states into one feature row per image",
        description="Pool per-word hidden states into fixed-size image "
        "features by coordinate-wise maximum. Config keys read: state_dim.",
    )
    _add_common(p)
    p.add_argument("--states", required=True, help="word-state JSONL file")
    p.add_argument("--states-fmat", required=True, help="companion state matrix")
    p.add_argument("--out", required=True, help="output feature matrix path")
    p.add_argument("--dtype", choices=["f32", "f64"], default="f32")
    p.add_argument("--state-dim", type=int, help="expected state dimension")
    p.set_defaults(func=_cmd_pool)

    p = subs.add_parser(
        "train",
        help="fit one sparse model per voxel",
        description="Fit voxel-wise sparse linear models from a feature "
        "matrix to a response matrix. Config keys read: sparsity_s, "
        "comparability_ratio, worker_count.",
    )
    _add_common(p)
    p.add_argument("--features", required=True, help="training feature matrix")
    p.add_argument("--responses", required=True, help="training response matrix")
    p.add_argument("--meta", required=True, help="voxel metadata CSV")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--source", default=ICF_SOURCE, help="feature source tag")
    p.add_argument("--algorithm", choices=["romp", "omp", "mp"], default="romp")
    p.add_argument("--sparsity", type=int, help="sparsity level per voxel")
    p.add_argument("--ratio", type=float, help="comparability ratio")
    p.add_argument("--max-support", type=int, help="support size cap")
    p.add_argument("--residual-tol", type=float, help="residual stopping tolerance")
    p.add_argument("--workers", type=int, help="parallel worker count")
    p.add_argument(
        "--center-responses",
        action="store_true",
        help="subtract each voxel's training mean before fitting",
    )
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser(
        "predict",
        help="apply a model set to a feature matrix",
        description="Predict voxel responses for new features under the "
        "stored training standardization. Config keys read: none.",
    )
    _add_common(p)
    p.add_argument("--models", required=True, help="model JSON path")
    p.add_argument("--features", required=True, help="feature matrix to score")
    p.add_argument("--out", required=True, help="output prediction matrix path")
    p.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    p.set_defaults(func=_cmd_predict)

    p = subs.add_parser(
        "evaluate",
        help="score predictions by per-voxel Pearson correlation",
        description="Evaluate a model set on held-out features and "
        "responses, writing CSV and JSON reports. Config keys read: none.",
    )
    _add_common(p)
    p.add_argument("--models", required=True)
    p.add_argument("--features", required=True, help="test feature matrix")
    p.add_argument("--responses", required=True, help="test response matrix")
    p.add_argument("--meta", required=True, help="voxel metadata CSV")
    p.add_argument("--out-prefix", required=True, help="writes <prefix>.csv and <prefix>.json")
    p.set_defaults(func=_cmd_evaluate)

    p = subs.add_parser(
        "layer-profile",
        help="tabulate mean PC per layer per region",
        description="Stack several evaluation reports (one per feature "
        "layer, in order) into a region-by-layer profile table. "
        "Config keys read: none.",
    )
    _add_common(p)
    p.add_argument("--reports", required=True, nargs="+", help="evaluation report JSON files")
    p.add_argument("--out", required=True, help="output profile CSV")
    p.add_argument("--best", help="also print the best layer for this region")
    p.set_defaults(func=_cmd_layer_profile)

    p = subs.add_parser(
        "compare",
        help="compare two evaluation reports voxel by voxel",
        description="Classify voxels by which model encodes them better and "
        "summarize the differences. Config keys read: threshold, "
        "histogram_bins.",
    )
    _add_common(p)
    p.add_argument("--report-a", required=True, help="first evaluation report JSON")
    p.add_argument("--report-b", required=True, help="second evaluation report JSON")
    p.add_argument("--out-prefix", required=True, help="writes <prefix>.csv and <prefix>.json")
    p.add_argument("--threshold", type=float, help="significance threshold on PC")
    p.add_argument("--bins", type=int, help="difference histogram bin count")
    p.set_defaults(func=_cmd_compare)

    p = subs.add_parser(
        "interpret",
        help="attribute caption words to voxels",
        description="Score every caption word against each voxel's observed "
        "response and write per-voxel word-frequency tables. Config keys "
        "read: words_per_image, stopwords, threshold (via --min-pc).",
    )
    _add_common(p)
    p.add_argument("--models", required=True)
    p.add_argument("--states", required=True, help="test word-state JSONL")
    p.add_argument("--states-fmat", required=True, help="companion state matrix")
    p.add_argument("--responses", required=True, help="test response matrix")
    p.add_argument("--meta", required=True, help="voxel metadata CSV")
    p.add_argument("--out-dir", required=True, help="directory for per-voxel CSV tables")
    p.add_argument("--k", type=int, help="words selected per image")
    p.add_argument("--voxel-ids", help="comma-separated subset of voxels")
    p.add_argument(
        "--min-pc",
        nargs="?",
        const="config",
        help="only interpret voxels whose test PC reaches this value "
        "(bare flag uses the config threshold)",
    )
    p.set_defaults(func=_cmd_interpret)

    p = subs.add_parser(
        "wordcloud",
        help="render a frequency table as an SVG word cloud",
        description="Render a deterministic SVG word cloud from a "
        "token,count table. Config keys read: seed.",
    )
    _add_common(p)
    p.add_argument("--table", required=True, help="frequency CSV (token,count)")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--voxel-id", help="voxel id (defaults to the table filename)")
    p.add_argument("--seed", type=int, help="layout seed")
    p.add_argument("--min-size", type=float, default=12.0)
    p.add_argument("--max-size", type=float, default=48.0)
    p.set_defaults(func=_cmd_wordcloud)

    p = subs.add_parser(
        "threshold",
        help="compute the analytic PC significance threshold",
        description="Solve the Student-t relation for the correlation "
        "magnitude at a tail probability. Config keys read: tails.",
    )
    _add_common(p)
    p.add_argument("--n", type=int, required=True, help="test sample count")
    p.add_argument("--p", type=float, default=0.001, help="tail probability")
    p.add_argument("--tails", choices=["one", "two"], help="tail convention")
    p.set_defaults(func=_cmd_threshold)

    p = subs.add_parser(
        "synth",
        help="generate a synthetic fixture bundle",
        description="Write a complete synthetic dataset with planted sparse "
        "ground truth, derived entirely from one seed. Config keys read: "
        "seed, state_dim, sparsity_s.",
    )
    _add_common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--n-train", type=int, default=600)
    p.add_argument("--n-test", type=int, default=113)
    p.add_argument("--voxels", type=int, default=200)
    p.add_argument("--dim", type=int, help="state dimension")
    p.add_argument("--words-min", type=int, default=5)
    p.add_argument("--words-max", type=int, default=9)
    p.add_argument("--sparsity", type=int, help="planted sparsity per voxel")
    p.set_defaults(func=_cmd_synth)

    return parser


def _load_feature_matrix(path, source: str) -> FeatureMatrix:
    data = read_fmat(path)
    if data.ids is None:
        raise ValidationError(
            f"feature matrix {path} carries no row ids; image ids are required"
        )
    return FeatureMatrix(values=data.values, image_ids=data.ids, source=source)


def _solver_config(args, cfg: PipelineConfig):
    from .solver import SolverConfig

    kwargs = {
        "sparsity_s": args.sparsity if args.sparsity is not None else cfg.sparsity_s,
        "comparability_ratio": args.ratio
        if args.ratio is not None
        else cfg.comparability_ratio,
    }
    if args.max_support is not None:
        kwargs["max_support"] = args.max_support
    if args.residual_tol is not None:
        kwargs["residual_tol"] = args.residual_tol
    return SolverConfig(**kwargs)


def _cmd_pool(args, cfg: PipelineConfig) -> int:
    dim = args.state_dim if args.state_dim is not None else cfg.state_dim
    seqs = read_word_states(args.states, args.states_fmat)
    matrix = build_feature_matrix(seqs, expected_dim=dim)
    write_fmat(matrix.values, args.out, dtype=args.dtype, ids=matrix.image_ids)
    print(f"pooled {matrix.values.shape[0]} images x {matrix.values.shape[1]} features -> {args.out}")
    return 0


def _cmd_train(args, cfg: PipelineConfig) -> int:
    features = _load_feature_matrix(args.features, args.source)
    responses = read_responses(args.responses, args.meta)
    features, responses = align(features, responses)
    solver_cfg = _solver_config(args, cfg)
    workers = args.workers if args.workers is not None else cfg.worker_count
    modelset = train_voxelwise(
        features,
        responses,
        solver_cfg,
        algorithm=args.algorithm,
        center_responses=args.center_responses,
        workers=workers,
    )
    save_models(modelset, args.out)
    failed = sum(1 for m in modelset.models if m.failed)
    print(
        f"fitted {len(modelset.models)} voxel models "
        f"({failed} degraded to mean-only) -> {args.out}"
    )
    return 0


def _cmd_predict(args, cfg: PipelineConfig) -> int:
    modelset = load_models(args.models)
    data = read_fmat(args.features)
    matrix = FeatureMatrix(
        values=data.values,
        image_ids=data.ids
        if data.ids is not None
        else [f"row{i}" for i in range(data.values.shape[0])],
        source=modelset.feature_source,
    )
    values = predict(modelset, matrix)
    write_fmat(values, args.out, dtype=args.dtype, ids=data.ids)
    print(f"predicted {values.shape[0]} samples x {values.shape[1]} voxels -> {args.out}")
    return 0


def _cmd_evaluate(args, cfg: PipelineConfig) -> int:
    modelset = load_models(args.models)
    features = _load_feature_matrix(args.features, modelset.feature_source)
    responses = read_responses(args.responses, args.meta)
    features, responses = align(features, responses)
    report = evaluate(modelset, features, responses)
    export_report(report, "csv", args.out_prefix + ".csv")
    export_report(report, "json", args.out_prefix + ".json")
    mean_all = report.region_means["all"]
    print(
        f"evaluated {len(report.voxels)} voxels on {report.n_test} samples: "
        f"mean PC {mean_all:.4f} ({report.degenerate_count} degenerate)"
    )
    return 0


def _cmd_layer_profile(args, cfg: PipelineConfig) -> int:
    reports = [read_report(path) for path in args.reports]
    profile = layer_profile(reports)
    rows = profile.rows()
    keys = [k for k in rows[0] if k != "layer"]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer"] + keys)
        for row in rows:
            writer.writerow([row["layer"]] + [repr(float(row[k])) for k in keys])
    print(f"profiled {len(rows)} layers -> {args.out}")
    if args.best:
        print(f"best layer for {args.best}: {best_layer(profile, args.best)}")
    return 0


def _cmd_compare(args, cfg: PipelineConfig) -> int:
    report_a = read_report(args.report_a)
    report_b = read_report(args.report_b)
    threshold = args.threshold if args.threshold is not None else cfg.threshold
    bins = args.bins if args.bins is not None else cfg.histogram_bins
    result = compare(report_a, report_b, threshold, bins=bins)
    export_report(result, "csv", args.out_prefix + ".csv")
    export_report(result, "json", args.out_prefix + ".json")
    print(
        f"jointly significant: {result.n_jointly_significant}; "
        f"fraction a better: {result.fraction_a_better}; "
        f"fraction b better: {result.fraction_b_better}"
    )
    return 0


def _cmd_interpret(args, cfg: PipelineConfig) -> int:
    modelset = load_models(args.models)
    seqs = read_word_states(args.states, args.states_fmat)
    responses = read_responses(args.responses, args.meta)
    if modelset.voxel_ids != responses.voxel_ids:
        raise ValidationError("model set and responses cover different voxels")

    by_image = {seq.image_id: seq for seq in seqs}
    keep = [i for i, img in enumerate(responses.image_ids) if img in by_image]
    if not keep:
        raise ValidationError("word states and responses share no image ids")
    ordered = [by_image[responses.image_ids[i]] for i in keep]
    observed = responses.values[keep, :]

    k = args.k if args.k is not None else cfg.words_per_image
    selected_ids = modelset.voxel_ids
    if args.voxel_ids:
        wanted = [v.strip() for v in args.voxel_ids.split(",") if v.strip()]
        unknown = sorted(set(wanted) - set(selected_ids))
        if unknown:
            raise ValidationError(f"unknown voxel ids: {', '.join(unknown)}")
        selected_ids = wanted
    index = {vid: i for i, vid in enumerate(modelset.voxel_ids)}
    if args.min_pc is not None:
        if args.min_pc == "config":
            min_pc = cfg.threshold
        else:
            try:
                min_pc = float(args.min_pc)
            except ValueError:
                raise ValidationError(
                    f"--min-pc expects a number, got {args.min_pc!r}"
                ) from None
        pooled = build_feature_matrix(ordered, expected_dim=modelset.feature_dim)
        predicted = predict(modelset, pooled)
        pcs = {
            vid: pearson(predicted[:, i], observed[:, i]) for vid, i in index.items()
        }
        selected_ids = [
            vid for vid in selected_ids if np.isfinite(pcs[vid]) and pcs[vid] >= min_pc
        ]

    os.makedirs(args.out_dir, exist_ok=True)
    models = {m.voxel_id: m for m in modelset.models}
    written = 0
    for vid in selected_ids:
        attribution = attribute_voxel(models[vid], ordered, observed[:, index[vid]], k)
        table = build_frequency_table(vid, attribution, stopwords=cfg.stopwords)
        write_frequency_csv(table, os.path.join(args.out_dir, f"{vid}.csv"))
        written += 1
    print(f"wrote {written} frequency tables -> {args.out_dir}")
    return 0


def _cmd_wordcloud(args, cfg: PipelineConfig) -> int:
    voxel_id = args.voxel_id
    if voxel_id is None:
        voxel_id = os.path.splitext(os.path.basename(args.table))[0]
    table = read_frequency_csv(args.table, voxel_id)
    seed = args.seed if args.seed is not None else cfg.seed
    svg = render_wordcloud_svg(
        table, seed=seed, min_size=args.min_size, max_size=args.max_size
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"rendered {len(table.counts)} words -> {args.out}")
    return 0


def _cmd_threshold(args, cfg: PipelineConfig) -> int:
    tails = args.tails if args.tails is not None else cfg.tails
    print(repr(significance_threshold(args.n, args.p, tails)))
    return 0


def _cmd_synth(args, cfg: PipelineConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    dim = args.dim if args.dim is not None else cfg.state_dim
    sparsity = args.sparsity if args.sparsity is not None else 4
    bundle = generate_bundle(
        args.out_dir,
        seed,
        n_train=args.n_train,
        n_test=args.n_test,
        n_voxels=args.voxels,
        state_dim=dim,
        words_min=args.words_min,
        words_max=args.words_max,
        sparsity=sparsity,
    )
    print(f"wrote {len(bundle.paths)} bundle files -> {bundle.out_dir}")
    return 0


def _emit_error(exc: BaseException, code: int, error_json: bool) -> None:
    print(f"error: {exc}", file=sys.stderr)
    if error_json:
        doc = {"error": type(exc).__name__, "message": str(exc), "exit": code}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    error_json = False
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help and --version exit directly
            return int(exc.code or 0)
        error_json = bool(getattr(args, "error_json", False))
        config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
        return int(args.func(args, config) or 0)
    except ValidationError as exc:
        _emit_error(exc, 1, error_json)
        return 1
    except OSError as exc:
        _emit_error(exc, 2, error_json)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything
        _emit_error(exc, 3, error_json)
        return 3


if __name__ == "__main__":
    sys.exit(main())
