"""Empirical coverage, average group size, and the benchmark grid runner.

``run_benchmark``/``run_cells`` share one engine that refines each split
once per transform and reuses the cumulative softmax masses between aps
and raps, so large seed sweeps stay cheap.  The per-query accounting is
identical to materializing :class:`~cret.core.PredictionSet` objects and
measuring those (a test pins this equivalence); it just never builds the
member sets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .conformal import (
    METHODS,
    Calibrator,
    aps_cumulative_mass,
    candidate_scores,
    conformal_quantile,
    raps_penalty,
)
from .core import GroundTruth, PredictionSet, QueryRun, RetrievalRun
from .errors import InvalidArgument, MissingGroundTruth
from .refine import TransformSpec, as_transform_spec, refine
from .validation import check_alpha


def empirical_coverage(
    sets: Iterable[PredictionSet], truth: GroundTruth
) -> float:
    """Fraction of prediction sets containing their ground-truth doc."""
    sets = list(sets)
    if not sets:
        raise InvalidArgument("no prediction sets to evaluate")
    covered = 0
    for pset in sets:
        if pset.query_id not in truth:
            raise MissingGroundTruth(
                f"query {pset.query_id!r} has no ground-truth label"
            )
        if truth[pset.query_id] in pset.members:
            covered += 1
    return covered / len(sets)


def avg_group_size(sets: Iterable[PredictionSet]) -> float:
    """Arithmetic mean of prediction-set cardinalities."""
    sizes = [len(pset) for pset in sets]
    if not sizes:
        raise InvalidArgument("no prediction sets to evaluate")
    return float(np.mean(sizes))


def split_queries(
    run: RetrievalRun,
    truth: GroundTruth,
    seed: int = 0,
    cal_frac: float = 0.5,
) -> tuple[list[str], list[str]]:
    """Seeded shuffle of the labeled queries, then a cal/test split."""
    labeled = sorted(qid for qid in run.runs if qid in truth)
    if len(labeled) < 2:
        raise InvalidArgument("need at least 2 labeled queries to split")
    if not 0.0 < cal_frac < 1.0:
        raise InvalidArgument(f"cal_frac must lie in (0, 1), got {cal_frac}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labeled))
    n_cal = int(len(labeled) * cal_frac)
    n_cal = min(max(n_cal, 1), len(labeled) - 1)
    cal = [labeled[i] for i in order[:n_cal]]
    test = [labeled[i] for i in order[n_cal:]]
    return cal, test


def evaluate_calibrator(
    run: RetrievalRun,
    truth: GroundTruth,
    cal: Calibrator,
    *,
    refined: bool = False,
) -> tuple[float, float, int]:
    """(empirical coverage, average group size, n) of ``cal`` on ``run``.

    Evaluates the labeled queries of ``run``.  Raw runs are refined with
    the calibrator's transform unless ``refined=True``.
    """
    labeled = [qid for qid in run.runs if qid in truth]
    if not labeled:
        raise InvalidArgument("no labeled queries to evaluate")
    covered = 0
    total_size = 0
    for qid in labeled:
        qrun = run[qid]
        if not refined and qrun.transform is None:
            qrun = refine(qrun, cal.transform)
        is_covered, size = _evaluate_query(qrun, truth[qid], cal, run.n_trunc)
        covered += is_covered
        total_size += size
    return covered / len(labeled), total_size / len(labeled), len(labeled)


def _evaluate_query(
    qrun: QueryRun, truth_doc: str, cal: Calibrator, n_trunc: int
) -> tuple[bool, int]:
    idx = qrun.index_of(truth_doc)
    if cal.method == "topk":
        size = min(cal.k, len(qrun))
        return idx is not None and idx + 1 <= cal.k, size
    scores = candidate_scores(
        qrun, cal.method, k_reg=cal.raps_k_reg, lambda_reg=cal.raps_lambda_reg
    )
    keep = scores <= cal.tau
    return idx is not None and bool(keep[idx]), int(np.count_nonzero(keep))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def display_method(method: str, transform: str) -> str:
    """Human-readable method label used in report tables."""
    if method == "vanilla":
        if transform.startswith("logrank"):
            return "Ours"
        if transform == "maxscore":
            return "Max Score"
        if transform == "zscore":
            return "Z-Score"
        return "Baseline"
    return {"topk": "TopK", "aps": "APS", "raps": "RAPS"}[method]


@dataclass(frozen=True, slots=True)
class EvalRow:
    dataset: str
    alpha: float
    method: str
    transform: str
    empirical_coverage: float
    avg_group_size: float
    n_test: int
    coverage_std: float | None = None
    size_std: float | None = None
    n_seeds: int = 1

    @property
    def label(self) -> str:
        return display_method(self.method, self.transform)


CSV_COLUMNS = (
    "dataset",
    "alpha",
    "method",
    "transform",
    "empirical_coverage",
    "avg_group_size",
    "n_test",
    "coverage_std",
    "size_std",
    "n_seeds",
)

MARKDOWN_COLUMNS = ("Dataset", "α", "Method", "Emp. Cov.", "Avg. Grp. Size")


@dataclass(frozen=True, slots=True)
class EvalReport:
    """Coverage/size results, one row per (method, transform, alpha) cell."""

    rows: list[EvalRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [
                        row.dataset,
                        repr(row.alpha),
                        row.method,
                        row.transform,
                        repr(row.empirical_coverage),
                        repr(row.avg_group_size),
                        row.n_test,
                        "" if row.coverage_std is None else repr(row.coverage_std),
                        "" if row.size_std is None else repr(row.size_std),
                        row.n_seeds,
                    ]
                )

    def to_markdown(self) -> str:
        lines = [
            "| " + " | ".join(MARKDOWN_COLUMNS) + " |",
            "|" + "|".join(" --- " for _ in MARKDOWN_COLUMNS) + "|",
        ]
        for row in self.rows:
            cov = f"{row.empirical_coverage:.3f}"
            size = f"{row.avg_group_size:.2f}"
            if row.n_seeds > 1:
                cov += f" ± {row.coverage_std:.3f}"
                size += f" ± {row.size_std:.2f}"
            lines.append(
                f"| {row.dataset} | {row.alpha:g} | {row.label} | {cov} | {size} |"
            )
        return "\n".join(lines) + "\n"

    def save_markdown(self, path: str | Path) -> None:
        Path(path).write_text(self.to_markdown(), encoding="utf-8")


def load_report_csv(path: str | Path) -> EvalReport:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                EvalRow(
                    dataset=rec["dataset"],
                    alpha=float(rec["alpha"]),
                    method=rec["method"],
                    transform=rec["transform"],
                    empirical_coverage=float(rec["empirical_coverage"]),
                    avg_group_size=float(rec["avg_group_size"]),
                    n_test=int(rec["n_test"]),
                    coverage_std=float(rec["coverage_std"])
                    if rec["coverage_std"]
                    else None,
                    size_std=float(rec["size_std"]) if rec["size_std"] else None,
                    n_seeds=int(rec["n_seeds"]),
                )
            )
    return EvalReport(rows=rows)


# ---------------------------------------------------------------------------
# Benchmark engine
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class _SplitView:
    """Refined score arrays and truth positions for one query list."""

    runs: list[QueryRun]
    truth_idx: list[int | None]
    lengths: np.ndarray
    _cums: list[np.ndarray] | None = None

    @property
    def cums(self) -> list[np.ndarray]:
        if self._cums is None:
            self._cums = [aps_cumulative_mass(r.scores) for r in self.runs]
        return self._cums


def _truth_inclusion(
    view: _SplitView, method: str, k_reg: int, lambda_reg: float
) -> np.ndarray:
    """Inclusion score of the truth doc per query (inf when missed)."""
    out = np.empty(len(view.runs))
    for i, (run, idx) in enumerate(zip(view.runs, view.truth_idx)):
        if idx is None:
            out[i] = math.inf
        elif method == "vanilla":
            out[i] = -run.scores[idx]
        elif method == "topk":
            out[i] = idx + 1
        elif method == "aps":
            out[i] = view.cums[i][idx]
        else:
            out[i] = view.cums[i][idx] + lambda_reg * max(0, idx + 1 - k_reg)
    return out


def _cell_metrics(
    test: _SplitView,
    test_c: np.ndarray,
    method: str,
    cutoff: float,
    k_reg: int,
    lambda_reg: float,
) -> tuple[float, float]:
    retrieved = np.asarray([idx is not None for idx in test.truth_idx])
    if method == "topk":
        sizes = np.minimum(cutoff, test.lengths)
        covered = retrieved & (test_c <= cutoff)
    else:
        sizes = np.empty(len(test.runs))
        if method == "vanilla":
            for i, run in enumerate(test.runs):
                sizes[i] = np.count_nonzero(run.scores >= -cutoff)
        else:
            for i, run in enumerate(test.runs):
                c = test.cums[i]
                if method == "raps":
                    c = c + raps_penalty(len(run), k_reg, lambda_reg)
                sizes[i] = np.count_nonzero(c <= cutoff)
        covered = retrieved & (test_c <= cutoff)
    return float(covered.mean()), float(sizes.mean())


def run_cells(
    run: RetrievalRun,
    truth: GroundTruth,
    cells: Sequence[tuple[str, TransformSpec | str]],
    alphas: Sequence[float] = (0.1, 0.05, 0.03),
    split_seed: int = 0,
    *,
    dataset: str = "data",
    cal_ids: Sequence[str] | None = None,
    test_ids: Sequence[str] | None = None,
    raps_k_reg: int = 5,
    raps_lambda_reg: float = 0.01,
) -> EvalReport:
    """Evaluate explicit (method, transform) cells at each alpha.

    Queries are split into calibration/test with a seeded shuffle unless
    explicit id lists are given.  Rows are ordered alpha-major, cells
    minor, which matches the benchmark table layout.
    """
    alphas = [check_alpha(a) for a in alphas]
    norm_cells = []
    for method, transform in cells:
        if method not in METHODS:
            raise InvalidArgument(
                f"unknown method {method!r}; expected one of {METHODS}"
            )
        norm_cells.append((method, as_transform_spec(transform)))

    if cal_ids is None or test_ids is None:
        cal_ids, test_ids = split_queries(run, truth, seed=split_seed)
    for qid in list(cal_ids) + list(test_ids):
        if qid not in run:
            raise InvalidArgument(f"split query {qid!r} not in run")
        if qid not in truth:
            raise MissingGroundTruth(f"query {qid!r} has no ground-truth label")

    raw_idx = {
        qid: run[qid].index_of(truth[qid]) for qid in (*cal_ids, *test_ids)
    }

    def build_view(ids: Sequence[str], spec: TransformSpec) -> _SplitView:
        refined = [refine(run[qid], spec) for qid in ids]
        return _SplitView(
            runs=refined,
            truth_idx=[raw_idx[qid] for qid in ids],
            lengths=np.asarray([len(r) for r in refined], dtype=np.float64),
        )

    results: dict[tuple[float, int], tuple[float, float]] = {}
    by_transform: dict[str, list[int]] = {}
    for i, (_, spec) in enumerate(norm_cells):
        by_transform.setdefault(spec.to_string(), []).append(i)

    for tag, cell_indices in by_transform.items():
        spec = as_transform_spec(tag)
        cal_view = build_view(cal_ids, spec)
        test_view = build_view(test_ids, spec)
        for ci in cell_indices:
            method = norm_cells[ci][0]
            cal_c = _truth_inclusion(cal_view, method, raps_k_reg, raps_lambda_reg)
            test_c = _truth_inclusion(test_view, method, raps_k_reg, raps_lambda_reg)
            for alpha in alphas:
                cutoff = conformal_quantile(cal_c, alpha)
                if method == "topk":
                    cutoff = float(run.n_trunc) if math.isinf(cutoff) else cutoff
                cov, size = _cell_metrics(
                    test_view, test_c, method, cutoff, raps_k_reg, raps_lambda_reg
                )
                results[(alpha, ci)] = (cov, size)

    rows = [
        EvalRow(
            dataset=dataset,
            alpha=alpha,
            method=norm_cells[ci][0],
            transform=norm_cells[ci][1].to_string(),
            empirical_coverage=results[(alpha, ci)][0],
            avg_group_size=results[(alpha, ci)][1],
            n_test=len(test_ids),
        )
        for alpha in alphas
        for ci in range(len(norm_cells))
    ]
    return EvalReport(rows=rows)


def run_benchmark(
    run: RetrievalRun,
    truth: GroundTruth,
    methods: Sequence[str] = ("vanilla",),
    transforms: Sequence[TransformSpec | str] = ("identity",),
    alphas: Sequence[float] = (0.1, 0.05, 0.03),
    split_seed: int = 0,
    **kwargs,
) -> EvalReport:
    """Cross-product benchmark over methods x transforms x alphas."""
    cells = [(m, t) for m in methods for t in transforms]
    return run_cells(run, truth, cells, alphas, split_seed, **kwargs)


def aggregate_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean ± stddev across per-seed reports with identical cell layouts."""
    if not reports:
        raise InvalidArgument("no reports to aggregate")
    if len(reports) == 1:
        return reports[0]
    layout = [(r.dataset, r.alpha, r.method, r.transform) for r in reports[0].rows]
    for rep in reports[1:]:
        if [(r.dataset, r.alpha, r.method, r.transform) for r in rep.rows] != layout:
            raise InvalidArgument("reports have different cell layouts")
    rows = []
    for i, first in enumerate(reports[0].rows):
        covs = np.asarray([rep.rows[i].empirical_coverage for rep in reports])
        sizes = np.asarray([rep.rows[i].avg_group_size for rep in reports])
        rows.append(
            EvalRow(
                dataset=first.dataset,
                alpha=first.alpha,
                method=first.method,
                transform=first.transform,
                empirical_coverage=float(covs.mean()),
                avg_group_size=float(sizes.mean()),
                n_test=first.n_test,
                coverage_std=float(covs.std(ddof=1)),
                size_std=float(sizes.std(ddof=1)),
                n_seeds=len(reports),
            )
        )
    return EvalReport(rows=rows)
