"""Command-line front end: fit, select-rank, score, diag, bench.

Exit codes: 0 on success, 2 on usage or input errors, 3 on numerical
failures (rank deficiency, degenerate restarts, singular Gram matrix).
All output tables are UTF-8, comma-delimited with a header row and LF
line endings.  The MCPCA_THREADS environment variable caps benchmark
worker threads (0 or unset: hardware default).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .diagnostics import compute_diagnostics, score_samples
from .decompose import FitConfig, FitReport, fit_mcpca, reconstruction_error
from .exceptions import (
    DataFormatError,
    DegenerateStartError,
    DegeneracyError,
    DimensionMismatchError,
    AsymmetricInputError,
    GramSingularityError,
    RankDeficiencyError,
)
from .ingest import (
    ContextDataset,
    build_tensor,
    global_pca_reduce,
    load_contexts,
    load_matrix,
    pooled_mean,
)
from .model_io import Preprocessing, load_model, save_model, save_report
from .model_select import select_rank
from .synth_bench import (
    BenchConfig,
    SweepConfig,
    run_accuracy_trials,
    run_sample_sweep,
    write_records,
)

_INPUT_ERRORS = (
    DataFormatError,
    DimensionMismatchError,
    AsymmetricInputError,
    ValueError,
)
_NUMERICAL_ERRORS = (
    RankDeficiencyError,
    DegenerateStartError,
    GramSingularityError,
    DegeneracyError,
)


def _infer_format(path, explicit):
    if explicit:
        return explicit
    return "per-context-files" if os.path.isdir(path) else "long-table"


def _load_dataset(args) -> ContextDataset:
    return load_contexts(args.input, _infer_format(args.input, args.format))


def _apply_stored_projection(X, preprocessing: Preprocessing):
    if preprocessing.projection is None:
        return X
    proj = preprocessing.projection
    if X.shape[1] == proj.shape[0]:
        # Data are already in the reduced coordinates.
        return X
    if X.shape[1] != proj.shape[1]:
        raise DimensionMismatchError(
            f"data has {X.shape[1]} columns; model expects {proj.shape[1]} "
            f"raw or {proj.shape[0]} reduced"
        )
    return (X - preprocessing.pca_mean) @ proj.T


def _write_table(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_fit(args) -> int:
    if args.rank < 1:
        raise ValueError("usage: --rank must be a positive integer")
    dataset = _load_dataset(args)
    preprocessing = Preprocessing()
    metadata = [("covariance", "unbiased"), ("centering", "per-context")]
    if args.pca_components is not None:
        mean = pooled_mean(dataset)
        dataset, projection = global_pca_reduce(dataset, args.pca_components)
        preprocessing = Preprocessing(
            pca_components=args.pca_components,
            projection=projection,
            pca_mean=mean,
        )
        metadata.append(("pca_components", str(args.pca_components)))
        metadata.append(("pca_whitened", "false"))
    tensor = build_tensor(dataset)
    cfg = FitConfig(
        seed=args.seed,
        restarts_per_component=args.restarts,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    model, report = fit_mcpca(tensor, args.rank, cfg)
    report = FitReport(
        reconstruction_error=report.reconstruction_error,
        per_context_error=report.per_context_error,
        objective_trace=report.objective_trace,
        restarts_used=report.restarts_used,
        iterations=report.iterations,
        elapsed_seconds=report.elapsed_seconds,
        seed=report.seed,
        non_identifiable_suspect=report.non_identifiable_suspect,
        metadata=tuple(metadata),
    )
    save_model(args.output, model, preprocessing)
    report_path = args.report or args.output + ".report.json"
    save_report(report_path, report)
    print(f"wrote {args.output} and {report_path}")
    return 0


def cmd_select_rank(args) -> int:
    candidates = [int(c) for c in args.candidates.split(",") if c.strip()]
    if not candidates:
        raise ValueError("usage: --candidates must list at least one rank")
    dataset = _load_dataset(args)
    tensor = build_tensor(dataset)
    report = select_rank(
        tensor,
        candidates,
        threshold=args.threshold,
        n_seed_pairs=args.n_seed_pairs,
        cfg=FitConfig(seed=args.seed),
    )
    payload = {
        "candidates": list(report.candidates),
        "stability": list(report.stability),
        "chosen": report.chosen,
        "threshold": report.threshold,
        "n_seed_pairs": report.n_seed_pairs,
        "scree": list(report.scree),
    }
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, indent=2) + "\n")
    print(f"chosen rank: {report.chosen}")
    return 0


def cmd_score(args) -> int:
    model, preprocessing = load_model(args.model)
    X = load_matrix(args.data)
    X = _apply_stored_projection(X, preprocessing)
    scores = score_samples(model, X)
    header = [f"mcpc{j + 1}" for j in range(model.r)]
    rows = [[repr(float(v)) for v in row] for row in scores]
    _write_table(args.output, header, rows)
    print(f"wrote {args.output} ({scores.shape[0]} rows)")
    return 0


def cmd_diag(args) -> int:
    model, preprocessing = load_model(args.model)
    dataset = _load_dataset(args)
    if preprocessing.projection is not None and dataset.p != model.p:
        contexts = tuple(
            (cid, _apply_stored_projection(x, preprocessing))
            for cid, x in dataset.contexts
        )
        dataset = ContextDataset(contexts)
    tensor = build_tensor(dataset)
    diag = compute_diagnostics(tensor, model)
    _, per_context = reconstruction_error(tensor, model)
    header = [
        "context",
        "reconstruction_error",
        "explained_ratio",
        "uncorrelatedness",
        "kl_loss",
        "kl_status",
    ]
    rows = []
    for i, cid in enumerate(tensor.context_ids or dataset.context_ids):
        kl = diag.kl_loss[i]
        rows.append(
            [
                cid,
                repr(float(per_context[i])),
                repr(float(diag.variance.ratio[i])),
                repr(float(diag.uncorrelatedness[i])),
                "" if kl is None else repr(float(kl)),
                "non-pd" if kl is None else "ok",
            ]
        )
    _write_table(args.output, header, rows)
    print(f"wrote {args.output}")
    return 0


def cmd_bench(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.mode == "accuracy":
        if args.trials < 1:
            raise ValueError("usage: --trials must be >= 1")
        cfg = BenchConfig(
            p=args.p,
            k=args.k,
            r=args.r,
            density=args.density,
            N=args.N,
            n_trials=args.trials,
            methods=methods,
            seed=args.seed,
            noiseless=args.noiseless,
            orthonormal=args.orthonormal,
        )
        records = run_accuracy_trials(cfg)
    else:
        grid = tuple(int(n) for n in args.N_grid.split(",") if n.strip())
        cfg = SweepConfig(
            p=args.p,
            k=args.k,
            r=args.r,
            density=args.density,
            N_grid=grid,
            methods=methods,
            seed=args.seed,
            orthonormal=args.orthonormal,
        )
        records = run_sample_sweep(cfg)
    write_records(args.output, records)
    print(f"wrote {args.output} ({len(records)} records)")
    return 0


def _add_dataset_arguments(sub):
    sub.add_argument("--input", required=True, help="dataset file or directory")
    sub.add_argument(
        "--format",
        choices=["long-table", "per-context-files"],
        default=None,
        help="input layout (default: inferred from the path type)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcpca",
        description=(
            "Decompose per-context covariance matrices into shared components "
            "and non-negative context loadings."
        ),
    )
    parser.add_argument("--version", action="version", version=f"mcpca {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="fit a model and write model/report files")
    _add_dataset_arguments(fit)
    fit.add_argument("--rank", type=int, required=True)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--restarts", type=int, default=10)
    fit.add_argument("--tol", type=float, default=1e-10)
    fit.add_argument("--max-iter", type=int, default=500)
    fit.add_argument(
        "--pca-components",
        type=int,
        default=None,
        help="reduce to this many pooled principal components first",
    )
    fit.add_argument("--output", required=True, help="model file to write")
    fit.add_argument("--report", default=None, help="report file (default: <output>.report.json)")
    fit.set_defaults(func=cmd_fit)

    select = commands.add_parser("select-rank", help="stability-based rank selection")
    _add_dataset_arguments(select)
    select.add_argument("--candidates", required=True, help="comma-separated ranks")
    select.add_argument("--threshold", type=float, default=0.8)
    select.add_argument("--n-seed-pairs", type=int, default=5)
    select.add_argument("--seed", type=int, default=0)
    select.add_argument("--output", required=True)
    select.set_defaults(func=cmd_select_rank)

    score = commands.add_parser("score", help="project samples onto the components")
    score.add_argument("--model", required=True)
    score.add_argument("--data", required=True, help="delimited sample matrix")
    score.add_argument("--output", required=True)
    score.set_defaults(func=cmd_score)

    diag = commands.add_parser("diag", help="per-context diagnostics table")
    diag.add_argument("--model", required=True)
    _add_dataset_arguments(diag)
    diag.add_argument("--output", required=True)
    diag.set_defaults(func=cmd_diag)

    bench = commands.add_parser("bench", help="synthetic accuracy/runtime benchmarks")
    bench.add_argument("--mode", choices=["accuracy", "sweep"], default="accuracy")
    bench.add_argument("--p", type=int, default=100)
    bench.add_argument("--k", type=int, default=50)
    bench.add_argument("--r", type=int, default=60)
    bench.add_argument("--density", type=float, default=0.2)
    bench.add_argument("--N", type=int, default=1000)
    bench.add_argument(
        "--N-grid",
        default="10,100,1000,10000,100000",
        help="comma-separated sample sizes for sweep mode",
    )
    bench.add_argument("--trials", type=int, default=40)
    bench.add_argument("--methods", default="mcpca,pca_stack,jennrich")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--noiseless", action="store_true")
    bench.add_argument("--orthonormal", action="store_true")
    bench.add_argument("--output", required=True)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
