"""Score-refinement transforms applied per query before calibration.

Every transform keeps the documents in their retrieval order and only
rewrites the scores:

* ``identity``   -- scores unchanged.
* ``maxscore``   -- divide by the query's largest score.
* ``zscore``     -- standardize within the query (population stddev).
* ``logrank``    -- max-normalize, then multiply rank ``r`` by the inverse
  logarithmic discount ``1 / log(1 + r**lam)`` (natural log).  ``lam`` in
  [0, 1] controls how fast the discount decays; ``lam = 0`` collapses to a
  constant ``1/log(2)`` factor on top of ``maxscore``.

Max-normalization makes scores comparable in scale across queries, and the
rank discount additionally deflates deep-ranked candidates, which is what
shrinks calibrated prediction sets.  All four transforms are monotone on
non-negative score vectors, so the retrieval order is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import QueryRun, RetrievalRun
from .errors import DegenerateScores, InvalidArgument, NonPositiveMax
from .validation import check_lambda

TRANSFORM_KINDS = ("identity", "maxscore", "zscore", "logrank")


@dataclass(frozen=True, slots=True)
class TransformSpec:
    """Which refinement to apply; ``lam`` is only read for ``logrank``."""

    kind: str = "identity"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise InvalidArgument(
                f"unknown transform {self.kind!r}; expected one of {TRANSFORM_KINDS}"
            )
        object.__setattr__(self, "lam", check_lambda(self.lam))

    def to_string(self) -> str:
        """Config-string form: ``identity``, ``maxscore``, ``zscore`` or
        ``logrank:<lam>``."""
        if self.kind == "logrank":
            return f"logrank:{self.lam!r}"
        return self.kind

    @classmethod
    def from_string(cls, text: str) -> TransformSpec:
        text = text.strip()
        if text.startswith("logrank:"):
            try:
                lam = float(text.split(":", 1)[1])
            except ValueError as exc:
                raise InvalidArgument(f"bad transform string {text!r}") from exc
            return cls("logrank", lam)
        if text == "logrank":
            raise InvalidArgument("logrank requires a lambda, e.g. 'logrank:0.03'")
        return cls(text)

    def __str__(self) -> str:
        return self.to_string()


def as_transform_spec(spec: TransformSpec | str) -> TransformSpec:
    """Accept either a TransformSpec or its config-string form."""
    if isinstance(spec, TransformSpec):
        return spec
    return TransformSpec.from_string(spec)


@lru_cache(maxsize=512)
def _discount_weights(n: int, lam: float) -> np.ndarray:
    """Inverse-log rank discount 1/log(1 + r**lam) for ranks 1..n."""
    ranks = np.arange(1, n + 1, dtype=np.float64)
    weights = 1.0 / np.log1p(ranks**lam)
    weights.setflags(write=False)
    return weights


def _max_normalize(run: QueryRun) -> np.ndarray:
    s_max = float(run.scores[0])
    if s_max <= 0.0:
        raise NonPositiveMax(
            f"query {run.query_id!r}: max score {s_max} is not positive"
        )
    return run.scores / s_max


def refine(run: QueryRun, spec: TransformSpec | str) -> QueryRun:
    """Apply a score transform to one query run.

    The result holds the same documents in the same order and carries the
    transform's config string in ``run.transform``.

    Raises
    ------
    NonPositiveMax
        For ``maxscore``/``logrank`` when the largest score is <= 0.
    DegenerateScores
        For ``zscore`` when every score is identical.
    """
    spec = as_transform_spec(spec)
    tag = spec.to_string()
    if spec.kind == "identity":
        return run.with_scores(run.scores, tag)
    if spec.kind == "maxscore":
        return run.with_scores(_max_normalize(run), tag)
    if spec.kind == "zscore":
        std = float(run.scores.std())
        if std == 0.0:
            raise DegenerateScores(
                f"query {run.query_id!r}: all scores equal, z-score undefined"
            )
        return run.with_scores((run.scores - run.scores.mean()) / std, tag)
    # logrank
    normalized = _max_normalize(run)
    return run.with_scores(normalized * _discount_weights(len(run), spec.lam), tag)


def refine_all(run: RetrievalRun, spec: TransformSpec | str) -> RetrievalRun:
    """Apply a transform to every query of a retrieval run."""
    spec = as_transform_spec(spec)
    return RetrievalRun(
        runs={qid: refine(qr, spec) for qid, qr in run.runs.items()},
        n_trunc=run.n_trunc,
    )


class ScoreRefiner(TransformerMixin, BaseEstimator):
    """Stateless transformer wrapping :func:`refine` for pipeline use.

    Parameters
    ----------
    kind : str, default="identity"
        One of ``identity``, ``maxscore``, ``zscore``, ``logrank``.
    lam : float, default=0.0
        Rank-discount strength in [0, 1]; only read when ``kind="logrank"``.
    """

    def __init__(self, kind: str = "identity", lam: float = 0.0):
        self.kind = kind
        self.lam = lam

    def _spec(self) -> TransformSpec:
        return TransformSpec(self.kind, self.lam)

    def fit(self, X=None, y=None):
        self._spec()  # validates parameters
        return self

    def transform(self, X: QueryRun | RetrievalRun):
        """Refine a single ``QueryRun`` or a whole ``RetrievalRun``."""
        spec = self._spec()
        if isinstance(X, RetrievalRun):
            return refine_all(X, spec)
        return refine(X, spec)
