"""Grid search for the rank-discount strength lambda.

For each candidate value, the calibration split fits a vanilla threshold
on log-rank-discounted scores and the validation split measures the
average prediction-set size; the winner is the lambda with the smallest
average size (ties go to the smaller, more conservative value).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .conformal import fit_calibrator
from .core import GroundTruth, RetrievalRun
from .errors import InvalidArgument
from .evaluation import evaluate_calibrator
from .refine import TransformSpec
from .validation import check_alpha


def default_grid_values(step: float = 0.03, stop: float = 0.99) -> tuple[float, ...]:
    """0.0, step, 2*step, ... up to ``stop`` (rounded to 2 decimals)."""
    count = int(round(stop / step)) + 1
    return tuple(round(i * step, 2) for i in range(count))


@dataclass(frozen=True, slots=True)
class LambdaGrid:
    """Ordered candidate lambdas, all in [0, 1]."""

    values: tuple[float, ...] = default_grid_values()

    def __post_init__(self):
        if not self.values:
            raise InvalidArgument("lambda grid is empty")
        arr = np.asarray(self.values, dtype=np.float64)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise InvalidArgument("lambda grid values must lie in [0, 1]")
        if np.any(np.diff(arr) <= 0.0):
            raise InvalidArgument("lambda grid values must be strictly increasing")

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)


class LambdaPoint(NamedTuple):
    lam: float
    avg_group_size: float
    empirical_coverage: float


def tune_lambda(
    cal_run: RetrievalRun,
    cal_truth: GroundTruth,
    val_run: RetrievalRun,
    val_truth: GroundTruth,
    alpha: float,
    grid: LambdaGrid | None = None,
) -> tuple[float, list[LambdaPoint]]:
    """Pick the lambda minimizing validation-set average group size.

    Returns the winning lambda and the full (lambda, avg size, coverage)
    curve for plotting.  Calibration and validation splits must be
    disjoint.
    """
    alpha = check_alpha(alpha)
    if grid is None:
        grid = LambdaGrid()
    overlap = set(cal_run.runs) & set(val_run.runs)
    if overlap:
        raise InvalidArgument(
            f"calibration and validation splits share {len(overlap)} queries"
        )
    curve: list[LambdaPoint] = []
    for lam in grid:
        spec = TransformSpec("logrank", lam)
        cal = fit_calibrator(
            cal_run, cal_truth, method="vanilla", transform=spec, alpha=alpha
        )
        coverage, avg_size, _ = evaluate_calibrator(val_run, val_truth, cal)
        curve.append(LambdaPoint(lam, avg_size, coverage))
    sizes = np.asarray([p.avg_group_size for p in curve])
    best = curve[int(np.argmin(sizes))].lam  # argmin takes the first minimum
    return best, curve


def write_curve_csv(curve: list[LambdaPoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "avg_group_size", "empirical_coverage"])
        for point in curve:
            writer.writerow(
                [repr(point.lam), repr(point.avg_group_size),
                 repr(point.empirical_coverage)]
            )


def load_curve_csv(path: str | Path) -> list[LambdaPoint]:
    curve = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            curve.append(
                LambdaPoint(
                    float(rec["lambda"]),
                    float(rec["avg_group_size"]),
                    float(rec["empirical_coverage"]),
                )
            )
    return curve
