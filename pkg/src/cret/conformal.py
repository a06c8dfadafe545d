"""Split-conformal calibration and prediction-set construction.

Four methods share one mechanism.  Each defines a per-candidate inclusion
score (a nonconformity):

* ``vanilla`` -- the negated (possibly refined) similarity score,
* ``topk``    -- the candidate's rank,
* ``aps``     -- the cumulative softmax mass down to the candidate,
* ``raps``    -- the aps score plus a hinge penalty on deep ranks.

Calibration takes the ``ceil((n+1)(1-alpha))``-th smallest inclusion score
of the ground-truth docs over the calibration queries; prediction keeps
every candidate whose inclusion score does not exceed that cutoff.  Ground
truths outside the truncated run score ``+inf``, which inflates the cutoff
conservatively and counts as a coverage failure at test time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import DocId, GroundTruth, PredictionSet, QueryRun, RetrievalRun
from .errors import (
    InvalidArgument,
    MissingGroundTruth,
    NoCalibrationData,
    TransformMismatch,
)
from .refine import TransformSpec, as_transform_spec, refine
from .validation import check_alpha, check_nonnegative, check_positive_int

METHODS = ("vanilla", "topk", "aps", "raps")


@dataclass(frozen=True, slots=True)
class NonconformityRecord:
    """Inclusion score of the ground-truth doc for one calibration query."""

    query_id: str
    c_true: float


@dataclass(frozen=True, slots=True)
class Calibrator:
    """A fitted calibration artifact.

    Exactly one of ``tau`` (vanilla/aps/raps) and ``k`` (topk) is set.
    """

    method: str
    alpha: float
    transform: TransformSpec
    tau: float | None = None
    k: int | None = None
    raps_k_reg: int = 5
    raps_lambda_reg: float = 0.01
    n_calibration: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(
                f"unknown method {self.method!r}; expected one of {METHODS}"
            )
        check_alpha(self.alpha)
        if self.method == "topk":
            if self.k is None or self.tau is not None:
                raise InvalidArgument("topk calibrators carry k, not tau")
        elif self.tau is None or self.k is not None:
            raise InvalidArgument(f"{self.method} calibrators carry tau, not k")
        if self.n_calibration < 1:
            raise InvalidArgument("n_calibration must be >= 1")

    @property
    def cutoff(self) -> float:
        return float(self.k) if self.method == "topk" else float(self.tau)

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "alpha": self.alpha,
            "transform": self.transform.to_string(),
            "raps_k_reg": self.raps_k_reg,
            "raps_lambda_reg": self.raps_lambda_reg,
            "n_calibration": self.n_calibration,
        }
        if self.method == "topk":
            doc["k"] = self.k
        else:
            doc["tau"] = self.tau
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> Calibrator:
        doc = json.loads(text)
        return cls(
            method=doc["method"],
            alpha=float(doc["alpha"]),
            transform=TransformSpec.from_string(doc["transform"]),
            tau=float(doc["tau"]) if "tau" in doc else None,
            k=int(doc["k"]) if "k" in doc else None,
            raps_k_reg=int(doc["raps_k_reg"]),
            raps_lambda_reg=float(doc["raps_lambda_reg"]),
            n_calibration=int(doc["n_calibration"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Calibrator:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Per-candidate inclusion scores
# ---------------------------------------------------------------------------


def aps_cumulative_mass(scores: np.ndarray) -> np.ndarray:
    """Cumulative softmax mass per rank (non-decreasing, ends at 1)."""
    shifted = scores - scores.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    return np.cumsum(probs)


def raps_penalty(n: int, k_reg: int, lambda_reg: float) -> np.ndarray:
    """Hinge penalty lambda_reg * max(0, r - k_reg) for ranks 1..n."""
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return lambda_reg * np.maximum(0.0, ranks - k_reg)


def candidate_scores(
    run: QueryRun,
    method: str,
    *,
    k_reg: int = 5,
    lambda_reg: float = 0.01,
    cumulative: np.ndarray | None = None,
) -> np.ndarray:
    """Inclusion score of every candidate under ``method``.

    ``cumulative`` lets callers reuse a precomputed aps cumulative-mass
    vector (raps shares it with aps).
    """
    if method == "vanilla":
        return -run.scores
    if method == "topk":
        return np.arange(1, len(run) + 1, dtype=np.float64)
    if cumulative is None:
        cumulative = aps_cumulative_mass(run.scores)
    if method == "aps":
        return cumulative
    if method == "raps":
        return cumulative + raps_penalty(len(run), k_reg, lambda_reg)
    raise InvalidArgument(f"unknown method {method!r}; expected one of {METHODS}")


def nonconformity_vanilla(run: QueryRun, truth: DocId) -> float:
    """Negated (refined) score of the truth doc; +inf if not retrieved."""
    idx = run.index_of(truth)
    if idx is None:
        return math.inf
    return float(-run.scores[idx])


def nonconformity_aps(run: QueryRun, truth: DocId) -> float:
    """Cumulative softmax mass down to and including the truth doc.

    Deterministic (non-randomized) variant; +inf if the truth was not
    retrieved.
    """
    idx = run.index_of(truth)
    if idx is None:
        return math.inf
    return float(aps_cumulative_mass(run.scores)[idx])


def nonconformity_raps(
    run: QueryRun, truth: DocId, k_reg: int = 5, lambda_reg: float = 0.01
) -> float:
    """aps nonconformity plus ``lambda_reg * max(0, rank - k_reg)``."""
    idx = run.index_of(truth)
    if idx is None:
        return math.inf
    rank = idx + 1
    base = float(aps_cumulative_mass(run.scores)[idx])
    return base + lambda_reg * max(0, rank - k_reg)


def truth_rank(run: QueryRun, truth: DocId) -> float:
    """1-based rank of the truth doc, +inf if not retrieved."""
    idx = run.index_of(truth)
    return math.inf if idx is None else float(idx + 1)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def conformal_quantile(values: np.ndarray, alpha: float) -> float:
    """The m-th smallest value with m = ceil((n+1)(1-alpha)); +inf if m > n."""
    alpha = check_alpha(alpha)
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        raise NoCalibrationData("no calibration records")
    m = math.ceil((n + 1) * (1.0 - alpha))
    if m > n:
        return math.inf
    return float(np.sort(values)[m - 1])


def calibrate_threshold(records: list[NonconformityRecord], alpha: float) -> float:
    """Threshold tau from ground-truth nonconformity records."""
    if not records:
        raise NoCalibrationData("no calibration records")
    return conformal_quantile(
        np.asarray([r.c_true for r in records], dtype=np.float64), alpha
    )


def calibrate_topk(
    runs: RetrievalRun, truths: GroundTruth, alpha: float
) -> int:
    """Fixed set size k: the conformal quantile of ground-truth ranks.

    Misses count as infinite rank; if the quantile overflows (m > n) or
    lands on a miss, k falls back to the truncation depth.
    """
    ranks = []
    for qid, run in runs.runs.items():
        if qid not in truths:
            raise MissingGroundTruth(f"query {qid!r} has no ground-truth label")
        ranks.append(truth_rank(run, truths[qid]))
    if not ranks:
        raise NoCalibrationData("no calibration queries")
    quantile = conformal_quantile(np.asarray(ranks), alpha)
    if math.isinf(quantile):
        return runs.n_trunc
    return int(quantile)


def _expected_tag(transform: TransformSpec) -> str:
    return transform.to_string()


def _check_transform(run: QueryRun, transform: TransformSpec) -> None:
    expected = _expected_tag(transform)
    tag = run.transform
    if tag is None and expected == "identity":
        return  # raw scores are identical to identity-refined ones
    if tag != expected:
        raise TransformMismatch(
            f"query {run.query_id!r} carries transform {tag!r}, "
            f"calibrator expects {expected!r}"
        )


def fit_calibrator(
    run: RetrievalRun,
    truth: GroundTruth,
    method: str = "vanilla",
    transform: TransformSpec | str = "identity",
    alpha: float = 0.1,
    *,
    raps_k_reg: int = 5,
    raps_lambda_reg: float = 0.01,
) -> Calibrator:
    """Refine raw runs, score the ground truths, and calibrate a cutoff.

    Every query of ``run`` is used for calibration and must be labeled in
    ``truth``.
    """
    if method not in METHODS:
        raise InvalidArgument(f"unknown method {method!r}; expected one of {METHODS}")
    alpha = check_alpha(alpha)
    spec = as_transform_spec(transform)
    raps_k_reg = check_positive_int(raps_k_reg, "raps_k_reg")
    raps_lambda_reg = check_nonnegative(raps_lambda_reg, "raps_lambda_reg")
    if len(run) == 0:
        raise NoCalibrationData("no calibration queries")

    if method == "topk":
        k = calibrate_topk(run, truth, alpha)
        return Calibrator(
            method=method,
            alpha=alpha,
            transform=spec,
            k=k,
            raps_k_reg=raps_k_reg,
            raps_lambda_reg=raps_lambda_reg,
            n_calibration=len(run),
        )

    records = []
    for qid, qrun in run.runs.items():
        if qid not in truth:
            raise MissingGroundTruth(f"query {qid!r} has no ground-truth label")
        refined = refine(qrun, spec)
        if method == "vanilla":
            c = nonconformity_vanilla(refined, truth[qid])
        elif method == "aps":
            c = nonconformity_aps(refined, truth[qid])
        else:
            c = nonconformity_raps(refined, truth[qid], raps_k_reg, raps_lambda_reg)
        records.append(NonconformityRecord(query_id=qid, c_true=c))
    tau = calibrate_threshold(records, alpha)
    return Calibrator(
        method=method,
        alpha=alpha,
        transform=spec,
        tau=tau,
        raps_k_reg=raps_k_reg,
        raps_lambda_reg=raps_lambda_reg,
        n_calibration=len(records),
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(run: QueryRun, cal: Calibrator) -> PredictionSet:
    """Prediction set for one query.

    ``run`` must already be refined with the calibrator's transform (raw
    runs are accepted when the calibrator uses ``identity``).
    """
    _check_transform(run, cal.transform)
    if cal.method == "topk":
        keep = np.arange(len(run)) < cal.k
    else:
        scores = candidate_scores(
            run, cal.method, k_reg=cal.raps_k_reg, lambda_reg=cal.raps_lambda_reg
        )
        keep = scores <= cal.tau
    members = frozenset(str(d) for d in run.doc_ids[keep])
    return PredictionSet(
        query_id=run.query_id, members=members, cutoff_value=cal.cutoff
    )


def predict_all(run: RetrievalRun, cal: Calibrator) -> dict[str, PredictionSet]:
    """Prediction sets for every query of a (refined) retrieval run."""
    return {qid: predict(qrun, cal) for qid, qrun in run.runs.items()}


class ConformalRetriever(BaseEstimator):
    """Conformal prediction sets on top of any similarity-scored run.

    Fits a calibrated cutoff on labeled calibration queries and turns new
    retrieval runs into per-query prediction sets that contain the relevant
    document with probability at least ``1 - alpha`` (marginally, under
    exchangeability).

    Parameters
    ----------
    method : str, default="vanilla"
        One of ``vanilla``, ``topk``, ``aps``, ``raps``.
    alpha : float, default=0.1
        Target miscoverage level in (0, 1).
    transform : str, default="identity"
        Score transform config string (``identity``, ``maxscore``,
        ``zscore`` or ``logrank:<lam>``) applied before calibration.
    raps_k_reg : int, default=5
        Rank beyond which the raps hinge penalty kicks in.
    raps_lambda_reg : float, default=0.01
        Strength of the raps hinge penalty.

    Attributes
    ----------
    calibrator_ : Calibrator
        The fitted calibration artifact (after ``fit``).

    Examples
    --------
    >>> model = ConformalRetriever(method="vanilla", alpha=0.1,
    ...                            transform="logrank:0.03")
    >>> sets = model.fit(cal_run, cal_truth).predict(test_run)
    """

    def __init__(
        self,
        method: str = "vanilla",
        alpha: float = 0.1,
        transform: str = "identity",
        raps_k_reg: int = 5,
        raps_lambda_reg: float = 0.01,
    ):
        self.method = method
        self.alpha = alpha
        self.transform = transform
        self.raps_k_reg = raps_k_reg
        self.raps_lambda_reg = raps_lambda_reg

    def fit(self, run: RetrievalRun, truth: GroundTruth) -> ConformalRetriever:
        """Calibrate on labeled queries; every query of ``run`` is used."""
        self.calibrator_ = fit_calibrator(
            run,
            truth,
            method=self.method,
            transform=self.transform,
            alpha=self.alpha,
            raps_k_reg=self.raps_k_reg,
            raps_lambda_reg=self.raps_lambda_reg,
        )
        return self

    def _refined(self, qrun: QueryRun) -> QueryRun:
        spec = self.calibrator_.transform
        if qrun.transform is None:
            return refine(qrun, spec)
        _check_transform(qrun, spec)
        return qrun

    def predict_one(self, qrun: QueryRun) -> PredictionSet:
        """Prediction set for a single query run (raw or pre-refined)."""
        self._check_fitted()
        return predict(self._refined(qrun), self.calibrator_)

    def predict(self, run: RetrievalRun) -> dict[str, PredictionSet]:
        """Prediction sets for every query of ``run``.

        Raw runs are refined with the fitted transform; pre-refined runs
        must carry a matching transform tag.
        """
        self._check_fitted()
        return {qid: self.predict_one(qrun) for qid, qrun in run.runs.items()}

    def _check_fitted(self) -> None:
        if not hasattr(self, "calibrator_"):
            raise NotFittedError(
                "this ConformalRetriever is not fitted yet; call fit() first"
            )
