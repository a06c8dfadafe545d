"""Tests for exact retrieval and the embedding file formats."""

import gzip
import math

import numpy as np
import pytest

from cret.errors import (
    DimensionMismatch,
    DuplicateEntry,
    InvalidArgument,
    InvalidQuery,
    InvalidScore,
    RunParseError,
)
from cret.retrieval import (
    EmbeddingMatrix,
    cosine_scores,
    load_embeddings,
    normalize_rows,
    save_embeddings_binary,
    save_embeddings_text,
    top_n,
)


def naive_cosine(q, rows):
    """Independent double-loop oracle."""
    out = []
    for row in rows:
        num = sum(float(a) * float(b) for a, b in zip(q, row))
        den = math.sqrt(sum(float(a) ** 2 for a in q)) * math.sqrt(
            sum(float(b) ** 2 for b in row)
        )
        out.append(num / den)
    return out


def random_matrix(rng, n, d, prefix="d"):
    return EmbeddingMatrix(
        ids=tuple(f"{prefix}{i:05d}" for i in range(n)),
        vectors=rng.standard_normal((n, d)),
    )


class TestCosineScores:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(41)
        corpus = normalize_rows(random_matrix(rng, 5, 8))
        scores = dict(cosine_scores(corpus.vectors[1] * 3.0, corpus))
        assert scores["d00001"] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_vectors_score_zero(self):
        corpus = EmbeddingMatrix(ids=("a", "b"),
                                 vectors=np.array([[1.0, 0.0], [0.0, 1.0]]))
        scores = dict(cosine_scores(np.array([1.0, 0.0]), corpus))
        assert scores["b"] == pytest.approx(0.0, abs=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(42)
        corpus = random_matrix(rng, 100, 16)
        q = rng.standard_normal(16)
        got = dict(cosine_scores(q, normalize_rows(corpus)))
        expected = naive_cosine(q, corpus.vectors)
        for i, doc in enumerate(corpus.ids):
            assert got[doc] == pytest.approx(expected[i], abs=1e-12)

    def test_scores_bounded(self):
        rng = np.random.default_rng(43)
        corpus = normalize_rows(random_matrix(rng, 50, 4))
        scores = [s for _, s in cosine_scores(rng.standard_normal(4), corpus)]
        assert max(scores) <= 1.0 + 1e-12 and min(scores) >= -1.0 - 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(44)
        a, b = rng.standard_normal(6), rng.standard_normal(6)
        mat_b = EmbeddingMatrix(ids=("b",), vectors=b[None, :])
        mat_a = EmbeddingMatrix(ids=("a",), vectors=a[None, :])
        ab = cosine_scores(a, mat_b)[0][1]
        ba = cosine_scores(b, mat_a)[0][1]
        assert ab == pytest.approx(ba, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        corpus = EmbeddingMatrix(ids=("a",), vectors=np.ones((1, 3)))
        with pytest.raises(DimensionMismatch):
            cosine_scores(np.ones(4), corpus)

    def test_zero_norm_query_rejected(self):
        corpus = EmbeddingMatrix(ids=("a",), vectors=np.ones((1, 3)))
        with pytest.raises(InvalidQuery):
            cosine_scores(np.zeros(3), corpus)

    def test_non_finite_query_rejected(self):
        corpus = EmbeddingMatrix(ids=("a",), vectors=np.ones((1, 3)))
        with pytest.raises(InvalidQuery):
            cosine_scores(np.array([1.0, np.nan, 0.0]), corpus)


class TestTopN:
    def test_two_of_five(self):
        scores = [("a", 0.1), ("b", 0.9), ("c", 0.5), ("d", 0.3), ("e", 0.7)]
        run = top_n(scores, 2)
        assert list(run.doc_ids) == ["b", "e"]

    def test_n_exceeding_corpus_returns_all(self):
        scores = [("a", 0.1), ("b", 0.9), ("c", 0.5), ("d", 0.3), ("e", 0.7)]
        assert len(top_n(scores, 10)) == 5

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(45)
        scores = [(f"d{i:05d}", float(s)) for i, s in
                  enumerate(rng.standard_normal(10_000))]
        run = top_n(scores, 2000)
        expected = sorted(scores, key=lambda p: (-p[1], p[0]))[:2000]
        assert run.to_pairs() == expected

    def test_excluded_docs_score_no_higher_than_included(self):
        rng = np.random.default_rng(46)
        scores = [(f"d{i}", float(s)) for i, s in enumerate(rng.uniform(size=200))]
        run = top_n(scores, 50)
        cutoff = run.scores.min()
        excluded = [s for d, s in scores if d not in set(run.doc_ids.tolist())]
        assert all(s <= cutoff for s in excluded)

    def test_invalid_n_rejected(self):
        with pytest.raises(InvalidArgument):
            top_n([("a", 0.5)], 0)


class TestEmbeddingFiles:
    def test_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(47)
        matrix = random_matrix(rng, 7, 5)
        path = tmp_path / "emb.bin"
        save_embeddings_binary(matrix, path)
        loaded = load_embeddings(path)
        assert loaded.ids == matrix.ids
        assert loaded.normalized
        # float32 storage: agreement to float32 precision after normalization
        expected = normalize_rows(
            EmbeddingMatrix(matrix.ids, matrix.vectors.astype(np.float32)
                            .astype(np.float64))
        )
        np.testing.assert_allclose(loaded.vectors, expected.vectors, atol=1e-7)

    def test_text_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(48)
        matrix = random_matrix(rng, 4, 3)
        path = tmp_path / "emb.txt"
        save_embeddings_text(matrix, path)
        loaded = load_embeddings(path)
        assert loaded.ids == matrix.ids
        np.testing.assert_array_equal(loaded.vectors, normalize_rows(matrix).vectors)

    def test_gzip_text(self, tmp_path):
        rng = np.random.default_rng(49)
        matrix = random_matrix(rng, 3, 4)
        path = tmp_path / "emb.txt.gz"
        save_embeddings_text(matrix, path)
        with gzip.open(path, "rt") as fh:
            assert fh.readline().startswith("d00000\t")
        assert load_embeddings(path).ids == matrix.ids

    def test_truncated_binary_rejected(self, tmp_path):
        rng = np.random.default_rng(50)
        path = tmp_path / "emb.bin"
        save_embeddings_binary(random_matrix(rng, 3, 4), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(RunParseError):
            load_embeddings(path)

    def test_text_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a\t1.0,2.0\nb\tnot-a-number,2.0\n")
        with pytest.raises(RunParseError, match=r":2:"):
            load_embeddings(path)

    def test_ragged_text_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a\t1.0,2.0\nb\t1.0\n")
        with pytest.raises(RunParseError, match=r":2:"):
            load_embeddings(path)

    def test_zero_norm_row_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a\t1.0,2.0\nb\t0.0,0.0\n")
        with pytest.raises(InvalidArgument, match="zero-norm"):
            load_embeddings(path)


class TestEmbeddingMatrixValidation:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(DuplicateEntry):
            EmbeddingMatrix(ids=("a", "a"), vectors=np.ones((2, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidScore):
            EmbeddingMatrix(ids=("a",), vectors=np.array([[np.inf, 1.0]]))

    def test_normalized_flag_checked(self):
        with pytest.raises(InvalidArgument):
            EmbeddingMatrix(ids=("a",), vectors=np.array([[3.0, 4.0]]),
                            normalized=True)

    def test_id_count_mismatch_rejected(self):
        with pytest.raises(InvalidArgument):
            EmbeddingMatrix(ids=("a", "b"), vectors=np.ones((1, 2)))
