"""Cosine k-nearest-neighbour similarity graph.

``W[i, j]`` holds the cosine similarity of documents ``i`` and ``j`` when
either is among the other's ``k`` nearest neighbours (self excluded), and 0
otherwise. Neighbour ties are broken towards the lower document index.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus, SparseDocVector

__all__ = [
    "SimilarityGraph",
    "build_knn_graph",
    "cosine",
    "knn_of",
    "load_graph",
    "normalized_rows",
    "save_graph",
    "select_top_k",
    "top_k_cosine",
]

log = logging.getLogger(__name__)

_BLOCK = 512
TIE_DECIMALS = 12


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    n: int
    adjacency: sp.csr_matrix
    degrees: np.ndarray
    k: int

    @property
    def isolated(self) -> np.ndarray:
        """Indices of nodes whose row of ``W`` is entirely zero."""
        return np.flatnonzero(self.degrees == 0)

    @property
    def nnz(self) -> int:
        return int(self.adjacency.nnz)


def cosine(a: SparseDocVector, b: SparseDocVector) -> float:
    na, nb = a.norm(), b.norm()
    if na == 0 or nb == 0:
        raise ValueError(f"cosine undefined for zero-norm document {a.doc_id if na == 0 else b.doc_id}")
    _, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
    return float(np.dot(a.weights[ia], b.weights[ib]) / (na * nb))


def normalized_rows(corpus: Corpus) -> sp.csr_matrix:
    """Unit-length rows; raises on any zero-norm document."""
    X = corpus.to_csr()
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        ids = corpus.doc_ids[zero[:10]].tolist()
        raise ValueError(f"zero-norm document(s) cannot enter the similarity graph: doc_id {ids}")
    return sp.csr_matrix(sp.diags(1.0 / norms) @ X)


def select_top_k(S: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the ``k`` largest entries per row, ties to the lowest column.

    Values equal to ``TIE_DECIMALS`` places count as tied, so rounding noise in
    the sparse products cannot reorder mathematically equal similarities.
    """
    S = np.round(S, TIE_DECIMALS)
    kth = np.partition(S, S.shape[1] - k, axis=1)[:, S.shape[1] - k]
    above = S > kth[:, None]
    tied = S == kth[:, None]
    need = k - above.sum(axis=1)
    return above | (tied & (np.cumsum(tied, axis=1) <= need[:, None]))


def top_k_cosine(Q: sp.csr_matrix, X: sp.csr_matrix, k: int, exclude_self: bool = False,
                 workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-``k`` cosine neighbours in ``X`` for every row of ``Q``.

    Both inputs must already have unit-length rows. Returns ``(idx, sim)``
    arrays of shape ``(len(Q), k)`` sorted by descending similarity, then
    ascending index. With ``exclude_self`` row ``i`` of ``Q`` is taken to be
    row ``i`` of ``X``.
    """
    nq, n = Q.shape[0], X.shape[0]
    limit = n - 1 if exclude_self else n
    if not 1 <= k <= limit:
        raise ValueError(f"k={k} must satisfy 1 <= k <= {limit}")
    idx = np.zeros((nq, k), dtype=np.int64)
    sim = np.zeros((nq, k))
    XT = sp.csc_matrix(X.T)

    def run(start):
        stop = min(start + _BLOCK, nq)
        S = (Q[start:stop] @ XT).toarray()
        if exclude_self:
            S[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        mask = select_top_k(S, k)
        rows, cols = np.nonzero(mask)
        cols = cols.reshape(stop - start, k)
        vals = S[rows, cols.ravel()].reshape(stop - start, k)
        order = np.lexsort((cols, -np.round(vals, TIE_DECIMALS)), axis=-1)
        idx[start:stop] = np.take_along_axis(cols, order, axis=1)
        sim[start:stop] = np.take_along_axis(vals, order, axis=1)

    starts = range(0, nq, _BLOCK)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, starts))
    else:
        for s in starts:
            run(s)
    return idx, sim


def knn_of(corpus: Corpus, query_index: int, k: int) -> list[tuple[int, float]]:
    n = len(corpus)
    if not 0 <= query_index < n:
        raise IndexError(f"query_index {query_index} out of range for {n} documents")
    Xn = normalized_rows(corpus)
    idx, sim = _knn_single(Xn, query_index, k)
    return list(zip(idx.tolist(), sim.tolist()))


def _knn_single(Xn, i, k):
    n = Xn.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={n}")
    s = (Xn[i] @ Xn.T).toarray().ravel()
    s[i] = -np.inf
    mask = select_top_k(s[None, :], k)[0]
    cols = np.flatnonzero(mask)
    order = np.lexsort((cols, -np.round(s[cols], TIE_DECIMALS)))
    return cols[order], s[cols[order]]


def build_knn_graph(corpus: Corpus, k: int, workers: int = 1) -> SimilarityGraph:
    """Brute-force all-pairs k-NN graph, OR-symmetrized."""
    n = len(corpus)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of documents n={n}")
    Xn = normalized_rows(corpus)
    idx, sim = top_k_cosine(Xn, Xn, k, exclude_self=True, workers=workers)
    rows = np.repeat(np.arange(n), k)
    directed = sp.csr_matrix((sim.ravel(), (rows, idx.ravel())), shape=(n, n))
    # max() of the two directions keeps W exactly symmetric despite rounding
    W = directed.maximum(directed.T).tocsr()
    W.eliminate_zeros()
    W.sort_indices()
    degrees = np.asarray(W.sum(axis=1)).ravel()
    graph = SimilarityGraph(n, W, degrees, k)
    if graph.isolated.size:
        log.warning("%d isolated node(s) with all-zero similarity rows", graph.isolated.size)
    return graph


def save_graph(graph: SimilarityGraph, path) -> None:
    upper = sp.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.n} {graph.k}\n")
        for i, j, w in zip(upper.row[order].tolist(), upper.col[order].tolist(), upper.data[order].tolist()):
            fh.write(f"{i} {j} {w!r}\n")


def load_graph(path) -> SimilarityGraph:
    with open(path, encoding="utf-8") as fh:
        n, k = (int(t) for t in fh.readline().split())
        edges = [line.split() for line in fh if line.strip()]
    i = np.array([int(e[0]) for e in edges], dtype=np.int64)
    j = np.array([int(e[1]) for e in edges], dtype=np.int64)
    w = np.array([float(e[2]) for e in edges], dtype=np.float64)
    W = sp.csr_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))
    W.sort_indices()
    return SimilarityGraph(n, W, np.asarray(W.sum(axis=1)).ravel(), k)
