"""Exact dense retrieval over embedding files.

Stands in for an approximate vector store: a full scan plus top-n
selection, so every downstream number is deterministic.  Two file formats
are read and written:

* binary: magic ``CRET1``, u32 dim, u64 count (little endian), then per
  record a u16 id length, the utf-8 id bytes, and dim little-endian
  float32 values;
* text: one ``id<TAB>v1,v2,...,vd`` line per document.

``.gz`` paths are compressed/decompressed transparently.  Vectors are
L2-normalized at load so cosine scoring reduces to a dot product; the
``normalized`` flag records this.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DocId, QueryRun
from .errors import (
    DimensionMismatch,
    DuplicateEntry,
    InvalidArgument,
    InvalidQuery,
    InvalidScore,
    RunParseError,
)

MAGIC = b"CRET1"
_HEADER = struct.Struct("<IQ")  # dim, count
_ID_LEN = struct.Struct("<H")


@dataclass(frozen=True, slots=True)
class EmbeddingMatrix:
    """Document (or query) embeddings, one row per id."""

    ids: tuple[str, ...]
    vectors: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise InvalidArgument("vectors must be a 2-D matrix")
        if len(self.ids) != self.vectors.shape[0]:
            raise InvalidArgument(
                f"{len(self.ids)} ids for {self.vectors.shape[0]} vector rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateEntry("duplicate ids in embedding matrix")
        if not np.isfinite(self.vectors).all():
            raise InvalidScore("embedding matrix contains non-finite values")
        if self.normalized:
            norms = np.linalg.norm(self.vectors, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise InvalidArgument("normalized flag set but rows are not unit norm")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)


def normalize_rows(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Return a copy whose rows have unit L2 norm."""
    if matrix.normalized:
        return matrix
    norms = np.linalg.norm(matrix.vectors, axis=1)
    if np.any(norms == 0.0):
        bad = matrix.ids[int(np.nonzero(norms == 0.0)[0][0])]
        raise InvalidArgument(f"zero-norm embedding for id {bad!r}")
    return EmbeddingMatrix(
        ids=matrix.ids, vectors=matrix.vectors / norms[:, None], normalized=True
    )


def _opener(path: str | Path, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def save_embeddings_binary(matrix: EmbeddingMatrix, path: str | Path) -> None:
    vectors = np.ascontiguousarray(matrix.vectors, dtype="<f4")
    with _opener(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(matrix.dim, len(matrix)))
        for doc_id, row in zip(matrix.ids, vectors):
            raw = doc_id.encode("utf-8")
            fh.write(_ID_LEN.pack(len(raw)))
            fh.write(raw)
            fh.write(row.tobytes())


def save_embeddings_text(matrix: EmbeddingMatrix, path: str | Path) -> None:
    with _opener(path, "wt") as fh:
        for doc_id, row in zip(matrix.ids, matrix.vectors):
            fh.write(doc_id + "\t" + ",".join(repr(float(v)) for v in row) + "\n")


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise RunParseError(f"{path}: truncated file while reading {what}")
    return data


def _load_binary(fh, path) -> EmbeddingMatrix:
    dim, count = _HEADER.unpack(_read_exact(fh, _HEADER.size, path, "header"))
    ids = []
    vectors = np.empty((count, dim), dtype=np.float64)
    for i in range(count):
        (id_len,) = _ID_LEN.unpack(_read_exact(fh, _ID_LEN.size, path, "id length"))
        ids.append(_read_exact(fh, id_len, path, "id").decode("utf-8"))
        raw = _read_exact(fh, 4 * dim, path, f"vector for {ids[-1]!r}")
        vectors[i] = np.frombuffer(raw, dtype="<f4")
    return EmbeddingMatrix(ids=tuple(ids), vectors=vectors)


def _load_text(path) -> EmbeddingMatrix:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    with _opener(path, "rt") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RunParseError(f"{path}:{lineno}: expected 'id<TAB>values'")
            try:
                row = np.asarray(
                    [float(v) for v in parts[1].split(",")], dtype=np.float64
                )
            except ValueError as exc:
                raise RunParseError(f"{path}:{lineno}: bad vector value") from exc
            if rows and row.shape != rows[0].shape:
                raise RunParseError(
                    f"{path}:{lineno}: dimension {row.size} differs from "
                    f"{rows[0].size}"
                )
            ids.append(parts[0])
            rows.append(row)
    if not rows:
        raise RunParseError(f"{path}: no embeddings found")
    return EmbeddingMatrix(ids=tuple(ids), vectors=np.vstack(rows))


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Load either format (auto-detected by magic) and normalize rows."""
    with _opener(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        with _opener(path, "rb") as fh:
            fh.read(len(MAGIC))
            matrix = _load_binary(fh, path)
    else:
        matrix = _load_text(path)
    return normalize_rows(matrix)


def cosine_scores(
    query_vec: np.ndarray, corpus: EmbeddingMatrix
) -> list[tuple[DocId, float]]:
    """Cosine similarity of the query against every corpus row."""
    query_vec = np.asarray(query_vec, dtype=np.float64)
    if query_vec.ndim != 1 or query_vec.shape[0] != corpus.dim:
        raise DimensionMismatch(
            f"query has dim {query_vec.shape}, corpus has dim {corpus.dim}"
        )
    if not np.isfinite(query_vec).all():
        raise InvalidQuery("query vector contains non-finite values")
    norm = float(np.linalg.norm(query_vec))
    if norm == 0.0:
        raise InvalidQuery("query vector has zero norm")
    unit = query_vec / norm
    if corpus.normalized:
        sims = corpus.vectors @ unit
    else:
        row_norms = np.linalg.norm(corpus.vectors, axis=1)
        if np.any(row_norms == 0.0):
            raise InvalidArgument("corpus contains a zero-norm row")
        sims = (corpus.vectors @ unit) / row_norms
    return list(zip(corpus.ids, sims.tolist()))


def top_n(
    scores: list[tuple[DocId, float]], n: int, query_id: str = "q"
) -> QueryRun:
    """The n highest-scoring candidates (all of them if fewer), ranked."""
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    full = QueryRun.from_pairs(query_id, scores)
    if len(full) <= n:
        return full
    return QueryRun(
        query_id,
        full.doc_ids[:n],
        full.scores[:n],
        validate=False,
    )
