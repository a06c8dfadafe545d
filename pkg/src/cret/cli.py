"""Command-line interface wiring the library into a retrieval workflow.

Subcommands: ``retrieve``, ``calibrate``, ``evaluate``, ``tune``,
``synth``, ``bench``.  All machine-readable output goes to files; stdout
carries human-readable summaries only.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .conformal import Calibrator, fit_calibrator
from .core import DEFAULT_N_TRUNC, RetrievalRun
from .data import (
    SynthConfig,
    _parse_tsv,
    generate_synthetic,
    load_qrels,
    load_run,
    reduce_qrels,
    save_qrels,
    save_run,
    synthetic_qrels,
)
from .errors import CretError, InvalidArgument
from .evaluation import (
    EvalReport,
    EvalRow,
    aggregate_reports,
    evaluate_calibrator,
    run_cells,
    split_queries,
)
from .retrieval import cosine_scores, load_embeddings, top_n
from .tune import LambdaGrid, tune_lambda, write_curve_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _strings(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cret",
        description="Conformal prediction sets for similarity-scored retrieval.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrieve", help="exact top-n retrieval over embeddings")
    p.add_argument("--corpus", required=True, help="corpus embedding file")
    p.add_argument("--queries", required=True, help="query embedding file")
    p.add_argument("-n", "--top-n", type=int, default=DEFAULT_N_TRUNC)
    p.add_argument("--out", required=True, help="output run TSV")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("calibrate", help="fit a conformal calibrator")
    p.add_argument("--run", required=True, help="calibration run TSV")
    p.add_argument("--qrels", required=True, help="calibration qrels TSV")
    p.add_argument("--method", default="vanilla",
                   choices=("vanilla", "topk", "aps", "raps"))
    p.add_argument("--transform", default="identity",
                   help="identity | maxscore | zscore | logrank:<lam>")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--raps-k-reg", type=int, default=5)
    p.add_argument("--raps-lambda-reg", type=float, default=0.01)
    p.add_argument("--n-trunc", type=int, default=DEFAULT_N_TRUNC)
    p.add_argument("--out", required=True, help="output calibrator JSON")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="coverage/size of a calibrator on a run")
    p.add_argument("--run", required=True, help="test run TSV")
    p.add_argument("--qrels", required=True, help="test qrels TSV")
    p.add_argument("--calibrator", required=True, help="calibrator JSON")
    p.add_argument("--dataset", default=None, help="dataset label for the report")
    p.add_argument("--n-trunc", type=int, default=DEFAULT_N_TRUNC)
    p.add_argument("--out", required=True, help="output report CSV")
    p.add_argument("--md", default=None, help="optional Markdown table output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="grid-search the rank-discount lambda")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--grid", default=None,
                   help="comma-separated lambdas (default 0.0:0.99 step 0.03)")
    p.add_argument("--seed", type=int, default=0, help="cal/val split seed")
    p.add_argument("--cal-frac", type=float, default=0.5)
    p.add_argument("--val-run", default=None,
                   help="explicit validation run TSV (else split --run)")
    p.add_argument("--val-qrels", default=None)
    p.add_argument("--n-trunc", type=int, default=DEFAULT_N_TRUNC)
    p.add_argument("--out", required=True, help="output curve CSV")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("synth", help="generate synthetic run + qrels files")
    p.add_argument("--n-queries", type=int, default=1000)
    p.add_argument("--n-candidates", type=int, default=200)
    p.add_argument("--scale-spread", type=float, default=1.0)
    p.add_argument("--truth-dist", default="geometric:0.3",
                   help="geometric:<p> | uniform:<max_r>")
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-trunc", type=int, default=DEFAULT_N_TRUNC)
    p.add_argument("--out-run", required=True)
    p.add_argument("--out-qrels", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="benchmark a settings matrix")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--methods", default="vanilla",
                   help="comma-separated: vanilla,topk,aps,raps")
    p.add_argument("--transforms", default="identity",
                   help="comma-separated transform strings")
    p.add_argument("--preset", choices=("comparison", "ablation"), default=None,
                   help="comparison: Baseline/APS/TopK/Ours; "
                        "ablation: Baseline/Max Score/Z-Score/Ours")
    p.add_argument("--lam", type=float, default=0.03,
                   help="rank-discount lambda used by presets")
    p.add_argument("--alphas", default="0.1,0.05,0.03")
    p.add_argument("--seeds", default="0", help="comma-separated split seeds")
    p.add_argument("--dataset", default=None, help="dataset label")
    p.add_argument("--n-trunc", type=int, default=DEFAULT_N_TRUNC)
    p.add_argument("--split-file", default=None,
                   help="TSV query_id<TAB>cal|test fixing the split")
    p.add_argument("--out", required=True, help="output report CSV")
    p.add_argument("--md", default=None, help="optional Markdown table output")
    p.set_defaults(func=cmd_bench)

    return parser


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_retrieve(args) -> None:
    corpus = load_embeddings(args.corpus)
    queries = load_embeddings(args.queries)
    runs = {}
    for qid, qvec in zip(queries.ids, queries.vectors):
        scores = cosine_scores(qvec, corpus)
        runs[qid] = top_n(scores, args.top_n, query_id=qid)
    run = RetrievalRun(runs=runs, n_trunc=max(args.top_n, 1))
    save_run(run, args.out)
    print(f"retrieved top-{args.top_n} for {len(runs)} queries -> {args.out}")


def cmd_calibrate(args) -> None:
    run = load_run(args.run, n_trunc=args.n_trunc)
    truth = reduce_qrels(load_qrels(args.qrels), run)
    labeled = {qid: run[qid] for qid in run.runs if qid in truth}
    cal = fit_calibrator(
        RetrievalRun(runs=labeled, n_trunc=run.n_trunc),
        truth,
        method=args.method,
        transform=args.transform,
        alpha=args.alpha,
        raps_k_reg=args.raps_k_reg,
        raps_lambda_reg=args.raps_lambda_reg,
    )
    cal.save(args.out)
    if cal.method == "topk":
        print(f"calibrated k={cal.k} on n={cal.n_calibration} queries -> {args.out}")
    else:
        note = "  (warning: quantile index overflow, sets keep everything)" \
            if cal.tau == float("inf") else ""
        print(
            f"calibrated tau={cal.tau} on n={cal.n_calibration} queries "
            f"-> {args.out}{note}"
        )


def cmd_evaluate(args) -> None:
    run = load_run(args.run, n_trunc=args.n_trunc)
    truth = reduce_qrels(load_qrels(args.qrels), run)
    cal = Calibrator.load(args.calibrator)
    coverage, avg_size, n_test = evaluate_calibrator(run, truth, cal)
    dataset = args.dataset or _stem(args.run)
    report = EvalReport(
        rows=[
            EvalRow(
                dataset=dataset,
                alpha=cal.alpha,
                method=cal.method,
                transform=cal.transform.to_string(),
                empirical_coverage=coverage,
                avg_group_size=avg_size,
                n_test=n_test,
            )
        ]
    )
    report.to_csv(args.out)
    if args.md:
        report.save_markdown(args.md)
    print(
        f"coverage={coverage:.4f} avg_group_size={avg_size:.3f} "
        f"n_test={n_test} -> {args.out}"
    )


def cmd_tune(args) -> None:
    run = load_run(args.run, n_trunc=args.n_trunc)
    truth = reduce_qrels(load_qrels(args.qrels), run)
    if args.val_run:
        if not args.val_qrels:
            raise InvalidArgument("--val-run requires --val-qrels")
        cal_run, cal_truth = run, truth
        val_run = load_run(args.val_run, n_trunc=args.n_trunc)
        val_truth = reduce_qrels(load_qrels(args.val_qrels), val_run)
    else:
        cal_ids, val_ids = split_queries(
            run, truth, seed=args.seed, cal_frac=args.cal_frac
        )
        cal_run = RetrievalRun(
            runs={q: run[q] for q in cal_ids}, n_trunc=run.n_trunc
        )
        val_run = RetrievalRun(
            runs={q: run[q] for q in val_ids}, n_trunc=run.n_trunc
        )
        cal_truth = val_truth = truth
    grid = LambdaGrid(tuple(_floats(args.grid))) if args.grid else LambdaGrid()
    best, curve = tune_lambda(cal_run, cal_truth, val_run, val_truth,
                              args.alpha, grid)
    write_curve_csv(curve, args.out)
    best_point = next(p for p in curve if p.lam == best)
    print(
        f"best lambda={best} (avg_group_size={best_point.avg_group_size:.3f}, "
        f"coverage={best_point.empirical_coverage:.4f}) -> {args.out}"
    )


def cmd_synth(args) -> None:
    cfg = SynthConfig(
        n_queries=args.n_queries,
        n_candidates=args.n_candidates,
        scale_spread=args.scale_spread,
        truth_rank_dist=args.truth_dist,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        n_trunc=args.n_trunc,
    )
    run, truth = generate_synthetic(cfg)
    save_run(run, args.out_run)
    save_qrels(synthetic_qrels(truth), args.out_qrels)
    print(
        f"generated {cfg.n_queries} queries x {cfg.n_candidates} candidates "
        f"-> {args.out_run}, {args.out_qrels}"
    )


def _preset_cells(args) -> list[tuple[str, str]]:
    ours = f"logrank:{args.lam!r}"
    if args.preset == "comparison":
        return [
            ("vanilla", "identity"),
            ("aps", "identity"),
            ("topk", "identity"),
            ("vanilla", ours),
        ]
    return [
        ("vanilla", "identity"),
        ("vanilla", "maxscore"),
        ("vanilla", "zscore"),
        ("vanilla", ours),
    ]


def _load_split_file(path: str) -> tuple[list[str], list[str]]:
    cal_ids, test_ids = [], []
    for lineno, (qid, part) in _parse_tsv(path, 2):
        if part == "cal":
            cal_ids.append(qid)
        elif part == "test":
            test_ids.append(qid)
        else:
            raise InvalidArgument(f"{path}:{lineno}: split must be 'cal' or 'test'")
    return cal_ids, test_ids


def cmd_bench(args) -> None:
    run = load_run(args.run, n_trunc=args.n_trunc)
    truth = reduce_qrels(load_qrels(args.qrels), run)
    if args.preset:
        cells = _preset_cells(args)
    else:
        cells = [
            (m, t) for m in _strings(args.methods) for t in _strings(args.transforms)
        ]
    alphas = _floats(args.alphas)
    seeds = _ints(args.seeds)
    dataset = args.dataset or _stem(args.run)
    explicit = _load_split_file(args.split_file) if args.split_file else None
    reports = []
    for seed in seeds:
        kwargs = {}
        if explicit:
            kwargs["cal_ids"], kwargs["test_ids"] = explicit
        reports.append(
            run_cells(
                run, truth, cells, alphas, split_seed=seed,
                dataset=dataset, **kwargs,
            )
        )
    report = aggregate_reports(reports)
    report.to_csv(args.out)
    if args.md:
        report.save_markdown(args.md)
    print(
        f"benchmarked {len(cells)} cells x {len(alphas)} alphas over "
        f"{len(seeds)} seed(s) -> {args.out}"
    )


def _stem(path: str) -> str:
    name = Path(path).name
    for suffix in (".gz", ".tsv", ".txt", ".csv"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name or "data"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except CretError as exc:
        print(f"cret: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"cret: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
