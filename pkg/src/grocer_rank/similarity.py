"""Cosine similarity between items (columns) or users (rows), with power-law exponent."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigError, DataError
from .ingest import InteractionMatrix


class ZeroVector(DataError):
    pass


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return float(min(max(np.dot(u, v) / (nu * nv), 0.0), 1.0))


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Symmetric sparse similarities with an implicit unit diagonal.

    Stored values are already raised to ``exponent`` and lie in (0, 1]; the
    diagonal is never stored.
    """

    ids: tuple[str, ...]
    values: sparse.csr_matrix = field(repr=False)
    exponent: float = 1.0

    def __post_init__(self):
        v = sparse.csr_matrix(self.values, dtype=np.float64)
        v.setdiag(0.0)
        v.eliminate_zeros()
        v.sort_indices()
        if v.shape != (len(self.ids), len(self.ids)):
            raise ValueError(f"values shape {v.shape} does not match {len(self.ids)} ids")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", v)

    @classmethod
    def from_pairs(cls, ids: Sequence[str], pairs: dict[tuple[str, str], float], exponent: float = 1.0):
        """Build from ``{(a, b): sim}``; each unordered pair given once, already exponentiated."""
        idx = {x: i for i, x in enumerate(ids)}
        rows, cols, data = [], [], []
        for (a, b), s in pairs.items():
            if a == b or s == 0:
                continue
            rows += [idx[a], idx[b]]
            cols += [idx[b], idx[a]]
            data += [s, s]
        m = sparse.csr_matrix((data, (rows, cols)), shape=(len(ids), len(ids)))
        return cls(tuple(ids), m, exponent)

    @classmethod
    def empty(cls, ids: Sequence[str], exponent: float = 1.0):
        return cls(tuple(ids), sparse.csr_matrix((len(ids), len(ids))), exponent)

    @cached_property
    def index(self) -> dict[str, int]:
        return {x: i for i, x in enumerate(self.ids)}

    def get(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return float(self.values[self.index[a], self.index[b]])

    def neighbors(self, a: str) -> list[tuple[str, float]]:
        """Neighbors of ``a`` by descending similarity, ties by id."""
        row = self.values.getrow(self.index[a])
        out = [(self.ids[j], float(s)) for j, s in zip(row.indices, row.data)]
        return sorted(out, key=lambda t: (-t[1], t[0]))

    @property
    def nnz(self) -> int:
        return self.values.nnz


def _prune_top_m(s: sparse.csr_matrix, top_m: int) -> sparse.csr_matrix:
    """Keep an edge if it is among the ``top_m`` strongest of either endpoint."""
    keep = np.zeros(s.nnz, dtype=bool)
    for r in range(s.shape[0]):
        lo, hi = s.indptr[r], s.indptr[r + 1]
        if hi - lo <= top_m:
            keep[lo:hi] = True
            continue
        # descending similarity, ascending column on ties
        order = np.lexsort((s.indices[lo:hi], -s.data[lo:hi]))
        keep[lo + order[:top_m]] = True
    rows = np.repeat(np.arange(s.shape[0]), np.diff(s.indptr))
    chosen = sparse.csr_matrix((np.ones(int(keep.sum())), (rows[keep], s.indices[keep])), shape=s.shape)
    mask = chosen + chosen.T
    mask.data[:] = 1.0
    return s.multiply(mask).tocsr()


def build_similarity_matrix(
    m: InteractionMatrix, axis: str, exponent: float = 1.0, top_m: int | None = None
) -> SimilarityMatrix:
    """Pairwise cosine over items (columns) or users (rows), raised to ``exponent``.

    ``top_m`` caps each node's neighbor list; an edge survives when it is in the
    top list of either endpoint, so the result stays symmetric.
    """
    if exponent < 1:
        raise ConfigError(f"similarity exponent must be >= 1, got {exponent}")
    if top_m is not None and top_m < 1:
        raise ConfigError(f"top_m must be >= 1, got {top_m}")
    if m.nnz == 0:
        raise DataError("cannot compute similarities of an empty matrix")
    if axis == "items":
        vectors, ids = m.values.T.tocsr(), m.items
    elif axis == "users":
        vectors, ids = m.values, m.users
    else:
        raise ConfigError(f"axis must be 'items' or 'users', got {axis!r}")

    sq_norms = np.asarray(vectors.multiply(vectors).sum(axis=1)).ravel()
    gram = sparse.triu(vectors @ vectors.T, k=1).tocoo()
    # dot / sqrt(|a|^2 |b|^2) is exact (1.0) for identical integer vectors
    data = gram.data / np.sqrt(sq_norms[gram.row] * sq_norms[gram.col])
    upper = sparse.csr_matrix((np.clip(data, 0.0, 1.0), (gram.row, gram.col)), shape=gram.shape)
    upper.eliminate_zeros()
    # mirror the strict upper triangle so that sim(i, j) == sim(j, i) bit for bit
    sim = (upper + upper.T).tocsr()
    if top_m is not None:
        sim = _prune_top_m(sim, top_m)
    if exponent != 1:
        sim.data = sim.data**exponent
    return SimilarityMatrix(tuple(ids), sim, float(exponent))


def similarity_to_csv(sim: SimilarityMatrix) -> bytes:
    """Upper-triangle ``id_a,id_b,similarity`` triples, 12 significant digits."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("id_a", "id_b", "similarity"))
    upper = sparse.triu(sim.values, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    for r, c, s in zip(upper.row[order], upper.col[order], upper.data[order]):
        w.writerow((sim.ids[r], sim.ids[c], f"{s:.12g}"))
    return buf.getvalue().encode("utf-8")


def similarity_from_csv(data: bytes, ids: Sequence[str] | None = None, exponent: float = 1.0) -> SimilarityMatrix:
    rows = list(csv.DictReader(io.StringIO(data.decode("utf-8"), newline="")))
    if ids is None:
        ids = sorted({r["id_a"] for r in rows} | {r["id_b"] for r in rows})
    pairs = {(r["id_a"], r["id_b"]): float(r["similarity"]) for r in rows}
    return SimilarityMatrix.from_pairs(ids, pairs, exponent)
