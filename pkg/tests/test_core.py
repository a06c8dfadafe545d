"""Tests for the core domain types and the canonical sort."""

import numpy as np
import pytest

from cret.core import (
    GroundTruth,
    PredictionSet,
    QueryRun,
    RetrievalRun,
    ScoredCandidate,
    sort_and_rank,
)
from cret.errors import (
    DuplicateEntry,
    EmptyCandidateList,
    InvalidArgument,
    InvalidScore,
)


def reference_sort(pairs):
    """Independent oracle: lexicographic sort on (-score, doc id)."""
    return sorted(pairs, key=lambda p: (-p[1], p[0]))


class TestSortAndRank:
    def test_basic_sort(self):
        out = sort_and_rank([("b", 0.3), ("a", 0.9), ("c", 0.6)])
        assert [(c.doc, c.score, c.rank) for c in out] == [
            ("a", 0.9, 1),
            ("c", 0.6, 2),
            ("b", 0.3, 3),
        ]

    def test_tie_broken_by_doc_id(self):
        out = sort_and_rank([("b", 0.5), ("a", 0.5)])
        assert [(c.doc, c.rank) for c in out] == [("a", 1), ("b", 2)]

    def test_matches_reference_sort_on_random_input(self):
        rng = np.random.default_rng(0)
        pairs = [(f"d{i:04d}", float(s)) for i, s in
                 enumerate(rng.standard_normal(2000))]
        rng.shuffle(pairs)
        out = sort_and_rank(pairs)
        expected = reference_sort(pairs)
        assert [(c.doc, c.score) for c in out] == expected
        assert [c.rank for c in out] == list(range(1, 2001))

    def test_permutation_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 50))
            pairs = [(f"d{i}", float(rng.integers(0, 5))) for i in range(n)]
            out = sort_and_rank(pairs)
            assert sorted((c.doc, c.score) for c in out) == sorted(pairs)

    def test_idempotent(self):
        pairs = [("x", 1.0), ("y", 2.0), ("z", 2.0)]
        once = sort_and_rank(pairs)
        twice = sort_and_rank([(c.doc, c.score) for c in once])
        assert once == twice

    def test_deterministic(self):
        pairs = [("a", 0.1), ("b", 0.9), ("c", 0.5)]
        assert sort_and_rank(pairs) == sort_and_rank(list(pairs))

    def test_empty_input_rejected(self):
        with pytest.raises(EmptyCandidateList):
            sort_and_rank([])

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
    def test_non_finite_score_rejected(self, bad):
        with pytest.raises(InvalidScore):
            sort_and_rank([("a", 0.5), ("b", bad)])


class TestQueryRun:
    def test_from_pairs_sorts(self):
        run = QueryRun.from_pairs("q1", [("b", 0.3), ("a", 0.9)])
        assert list(run.doc_ids) == ["a", "b"]
        assert run.scores.tolist() == [0.9, 0.3]
        assert run.transform is None

    def test_candidates_view(self):
        run = QueryRun.from_pairs("q1", [("a", 0.9), ("b", 0.3)])
        assert run.candidates == [
            ScoredCandidate("a", 0.9, 1),
            ScoredCandidate("b", 0.3, 2),
        ]

    def test_index_of(self):
        run = QueryRun.from_pairs("q1", [("a", 0.9), ("b", 0.3)])
        assert run.index_of("b") == 1
        assert run.index_of("zzz") is None

    def test_unsorted_direct_construction_rejected(self):
        with pytest.raises(InvalidArgument):
            QueryRun("q1", np.array(["a", "b"]), np.array([0.1, 0.9]))

    def test_duplicate_doc_rejected(self):
        with pytest.raises(DuplicateEntry):
            QueryRun("q1", np.array(["a", "a"]), np.array([0.9, 0.1]))

    def test_empty_rejected(self):
        with pytest.raises(EmptyCandidateList):
            QueryRun("q1", np.array([]), np.array([]))

    def test_with_scores_shares_docs(self):
        run = QueryRun.from_pairs("q1", [("a", 0.9), ("b", 0.3)])
        derived = run.with_scores(run.scores * 2.0, transform="maxscore")
        assert derived.doc_ids is run.doc_ids
        assert derived.transform == "maxscore"
        assert run.transform is None


class TestContainers:
    def test_retrieval_run_enforces_n_trunc(self):
        run = QueryRun.from_pairs("q1", [("a", 0.9), ("b", 0.3)])
        with pytest.raises(InvalidArgument):
            RetrievalRun(runs={"q1": run}, n_trunc=1)

    def test_retrieval_run_key_mismatch(self):
        run = QueryRun.from_pairs("q1", [("a", 0.9)])
        with pytest.raises(InvalidArgument):
            RetrievalRun(runs={"other": run})

    def test_ground_truth_lookup(self):
        truth = GroundTruth(labels={"q1": "a"}, misses=frozenset({"q2"}))
        assert truth["q1"] == "a"
        assert "q1" in truth and "q2" not in truth
        assert "q2" in truth.misses

    def test_prediction_set(self):
        pset = PredictionSet("q1", frozenset({"a", "b"}), cutoff_value=-0.5)
        assert len(pset) == 2
        assert "a" in pset and "c" not in pset
