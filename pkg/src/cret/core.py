"""Core domain types: ranked candidate lists, ground truth, prediction sets.

All types are immutable after construction and safe to share across
workers.  ``QueryRun`` is array-backed (one id array and one float64 score
array per query) so that per-query operations stay vectorized; the
``ScoredCandidate`` object view is materialized on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateEntry,
    EmptyCandidateList,
    InvalidArgument,
    InvalidScore,
)

DocId = str

DEFAULT_N_TRUNC = 2000


@dataclass(frozen=True, slots=True)
class ScoredCandidate:
    """One retrieved document with its score and 1-based rank."""

    doc: DocId
    score: float
    rank: int


def sorted_order(doc_ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Indices that sort by score descending, ties by ascending doc id."""
    return np.lexsort((doc_ids, -scores))


def sort_and_rank(candidates: list[tuple[DocId, float]]) -> list[ScoredCandidate]:
    """Sort (doc, score) pairs into ranked candidates.

    Output is ordered by score descending with equal scores broken by
    ascending doc id, and ranks are contiguous from 1.

    Raises
    ------
    EmptyCandidateList
        If ``candidates`` is empty.
    InvalidScore
        If any score is NaN or infinite.
    """
    if not candidates:
        raise EmptyCandidateList("cannot rank an empty candidate list")
    doc_ids = np.asarray([doc for doc, _ in candidates])
    scores = np.asarray([score for _, score in candidates], dtype=np.float64)
    if not np.isfinite(scores).all():
        bad = doc_ids[~np.isfinite(scores)][0]
        raise InvalidScore(f"non-finite score for doc {bad!r}")
    order = sorted_order(doc_ids, scores)
    return [
        ScoredCandidate(doc=str(doc_ids[i]), score=float(scores[i]), rank=r)
        for r, i in enumerate(order, start=1)
    ]


class QueryRun:
    """One query's ranked candidate list.

    ``scores[i]`` belongs to ``doc_ids[i]``; position ``i`` is rank ``i+1``.
    ``transform`` records which score transform produced the scores
    (``None`` means raw retrieval scores).  The arrays are treated as
    read-only; derived runs share the id array.
    """

    __slots__ = ("query_id", "doc_ids", "scores", "transform")

    def __init__(
        self,
        query_id: str,
        doc_ids: np.ndarray,
        scores: np.ndarray,
        transform: str | None = None,
        *,
        validate: bool = True,
    ):
        self.query_id = query_id
        self.doc_ids = np.asarray(doc_ids)
        self.scores = np.asarray(scores, dtype=np.float64)
        self.transform = transform
        if validate:
            self._check()

    def _check(self) -> None:
        if len(self.doc_ids) == 0:
            raise EmptyCandidateList(f"query {self.query_id!r} has no candidates")
        if len(self.doc_ids) != len(self.scores):
            raise InvalidArgument(
                f"query {self.query_id!r}: {len(self.doc_ids)} ids vs "
                f"{len(self.scores)} scores"
            )
        if not np.isfinite(self.scores).all():
            raise InvalidScore(f"query {self.query_id!r} carries non-finite scores")
        # Raw runs must be score-sorted; transformed runs keep the raw doc
        # order, which transforms only guarantee to be score-sorted for
        # non-negative inputs.
        if self.transform is None and np.any(np.diff(self.scores) > 0):
            raise InvalidArgument(f"query {self.query_id!r} is not sorted by score")
        if len(np.unique(self.doc_ids)) != len(self.doc_ids):
            raise DuplicateEntry(f"query {self.query_id!r} lists a doc twice")

    @classmethod
    def from_pairs(cls, query_id: str, pairs: list[tuple[DocId, float]]) -> QueryRun:
        """Build a run from unordered (doc, score) pairs."""
        ranked = sort_and_rank(pairs)
        doc_ids = np.asarray([c.doc for c in ranked])
        scores = np.asarray([c.score for c in ranked], dtype=np.float64)
        return cls(query_id, doc_ids, scores)

    def with_scores(self, scores: np.ndarray, transform: str) -> QueryRun:
        """Same docs in the same order, new scores (used by transforms)."""
        return QueryRun(
            self.query_id, self.doc_ids, scores, transform=transform, validate=False
        )

    def index_of(self, doc: DocId) -> int | None:
        """0-based position of ``doc``, or None if it was not retrieved."""
        hits = np.nonzero(self.doc_ids == doc)[0]
        return int(hits[0]) if hits.size else None

    @property
    def candidates(self) -> list[ScoredCandidate]:
        return [
            ScoredCandidate(doc=str(d), score=float(s), rank=r)
            for r, (d, s) in enumerate(zip(self.doc_ids, self.scores), start=1)
        ]

    def to_pairs(self) -> list[tuple[DocId, float]]:
        return [(str(d), float(s)) for d, s in zip(self.doc_ids, self.scores)]

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __repr__(self) -> str:
        return (
            f"QueryRun(query_id={self.query_id!r}, n={len(self)}, "
            f"transform={self.transform!r})"
        )


@dataclass(frozen=True, slots=True)
class RetrievalRun:
    """A set of query runs plus the truncation depth they respect."""

    runs: dict[str, QueryRun]
    n_trunc: int = DEFAULT_N_TRUNC

    def __post_init__(self):
        if self.n_trunc < 1:
            raise InvalidArgument(f"n_trunc must be >= 1, got {self.n_trunc}")
        for qid, run in self.runs.items():
            if qid != run.query_id:
                raise InvalidArgument(
                    f"key {qid!r} does not match run id {run.query_id!r}"
                )
            if len(run) > self.n_trunc:
                raise InvalidArgument(
                    f"query {qid!r} has {len(run)} candidates, exceeds "
                    f"n_trunc={self.n_trunc}"
                )

    @property
    def query_ids(self) -> list[str]:
        return list(self.runs)

    def __len__(self) -> int:
        return len(self.runs)

    def __getitem__(self, query_id: str) -> QueryRun:
        return self.runs[query_id]

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.runs


@dataclass(frozen=True, slots=True)
class GroundTruth:
    """query id -> the single relevant doc id.

    ``misses`` flags queries whose relevant doc was never retrieved; their
    label defaults to the lexicographically smallest relevant doc so that
    accounting stays deterministic.
    """

    labels: dict[str, DocId]
    misses: frozenset[str] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, query_id: str) -> DocId:
        return self.labels[query_id]

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.labels


@dataclass(frozen=True, slots=True)
class PredictionSet:
    """The documents retained for one query at a calibrated cutoff."""

    query_id: str
    members: frozenset[DocId]
    cutoff_value: float

    @property
    def size(self) -> int:
        return len(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, doc: DocId) -> bool:
        return doc in self.members
