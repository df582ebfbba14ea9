"""Laplacian-eigenmap embedding of a similarity graph and its median binarization.

The generalized problem ``L v = lambda D v`` is solved in the symmetric form
``(I - D^-1/2 W D^-1/2) u = lambda u`` with ``v = D^-1/2 u``. The null space
of a graph with ``c`` connected components is spanned by the (D^1/2-scaled)
component indicators and is known in closed form, so it is deflated before
the eigensolve. The trivial direction ``D^1/2 1`` is dropped from it and the
remaining ``c - 1`` null vectors are kept (they encode component membership).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .hashcodes import CodeMatrix
from .knn_graph import SimilarityGraph

__all__ = [
    "DENSE_LIMIT",
    "BinarizationThresholds",
    "Embedding",
    "EigensolverError",
    "bit_correlations",
    "lanczos_largest",
    "laplacian",
    "load_embedding",
    "median_binarize",
    "save_embedding",
    "solve_lapeig",
    "trace_objective",
    "weighted_hamming_objective",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
EMBEDDING_MAGIC = "sth-embedding"
EMBEDDING_VERSION = 1


class EigensolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Embedding:
    coords: np.ndarray
    eigenvalues: np.ndarray
    solver_stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True, eq=False)
class BinarizationThresholds:
    values: np.ndarray


def laplacian(graph: SimilarityGraph) -> sp.csr_matrix:
    L = sp.diags(graph.degrees) - graph.adjacency
    return sp.csr_matrix(L)


def _null_space(graph: SimilarityGraph, sqrt_d: np.ndarray) -> tuple[np.ndarray, int]:
    """Orthonormal null-space vectors of the normalized Laplacian, trivial one removed."""
    n_comp, labels = connected_components(graph.adjacency, directed=False)
    if n_comp == 1:
        return np.zeros((graph.n, 0)), 1
    Z = np.zeros((graph.n, n_comp))
    Z[np.arange(graph.n), labels] = sqrt_d
    Z /= np.linalg.norm(Z, axis=0)
    u0 = sqrt_d / np.linalg.norm(sqrt_d)
    Q, _ = np.linalg.qr(np.column_stack([u0, Z[:, : n_comp - 1]]))
    return Q[:, 1:], n_comp


def lanczos_largest(matvec, n: int, nev: int, tol: float = 1e-10, max_basis: int | None = None,
                    max_restarts: int = 200, seed: int = 0) -> tuple[np.ndarray, np.ndarray, dict]:
    """Largest ``nev`` eigenpairs of a symmetric operator.

    Thick-restart Lanczos with full reorthogonalization: the basis is grown
    by applying the operator to the newest vector and orthogonalizing twice
    against the whole basis; at each restart the Ritz vectors of the wanted
    pairs are kept and expansion continues from the residual direction.
    Converged when every wanted residual norm is below ``tol`` times the
    largest Ritz value magnitude.
    """
    if max_basis is None:
        max_basis = min(n, max(2 * nev + 20, 60))
    max_basis = min(max_basis, n)
    if nev > max_basis:
        raise ValueError("nev exceeds basis size")
    rng = np.random.default_rng(seed)
    V = np.zeros((n, max_basis))
    AV = np.zeros((n, max_basis))
    v = rng.standard_normal(n)
    V[:, 0] = v / np.linalg.norm(v)
    AV[:, 0] = matvec(V[:, 0])
    size = 1
    matvecs = 1
    residuals = np.full(nev, np.inf)
    for restart in range(max_restarts + 1):
        while size < max_basis:
            w = AV[:, size - 1].copy()
            for _ in range(2):
                w -= V[:, :size] @ (V[:, :size].T @ w)
            norm = np.linalg.norm(w)
            if norm < 1e-12:
                # invariant subspace: continue from a fresh random direction
                w = rng.standard_normal(n)
                for _ in range(2):
                    w -= V[:, :size] @ (V[:, :size].T @ w)
                norm = np.linalg.norm(w)
            V[:, size] = w / norm
            AV[:, size] = matvec(V[:, size])
            matvecs += 1
            size += 1
        H = V[:, :size].T @ AV[:, :size]
        theta, S = np.linalg.eigh((H + H.T) / 2)
        order = np.argsort(-theta)
        theta, S = theta[order], S[:, order]
        X = V[:, :size] @ S
        AX = AV[:, :size] @ S
        R = AX[:, :nev] - X[:, :nev] * theta[:nev]
        residuals = np.linalg.norm(R, axis=0)
        scale = max(np.abs(theta).max(), 1e-300)
        if np.all(residuals <= tol * scale) or size == n:
            stats = {"iterations": matvecs, "restarts": restart, "residuals": residuals.tolist()}
            return theta[:nev], X[:, :nev], stats
        keep = min(size - 1, nev + max(2, (max_basis - nev) // 2))
        V[:, :keep] = X[:, :keep]
        AV[:, :keep] = AX[:, :keep]
        w = R[:, int(np.argmax(residuals))]
        for _ in range(2):
            w = w - V[:, :keep] @ (V[:, :keep].T @ w)
        V[:, keep] = w / np.linalg.norm(w)
        AV[:, keep] = matvec(V[:, keep])
        matvecs += 1
        size = keep + 1
    raise EigensolverError(
        f"Lanczos did not converge after {max_restarts} restarts; residuals {residuals.tolist()}",
        residuals,
    )


def _fix_signs(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for p in range(V.shape[1]):
        mag = np.abs(V[:, p])
        # near-equal magnitudes count as ties and resolve to the lowest index
        i = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-9))[0])
        if V[i, p] < 0:
            V[:, p] = -V[:, p]
    return V


def _order_columns(vals: np.ndarray, V: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Permutation sorting by eigenvalue, degenerate groups by argmax-|v| index."""
    order = np.argsort(vals, kind="stable")
    group = np.zeros(vals.size, dtype=np.int64)
    for a in range(1, order.size):
        gap = vals[order[a]] - vals[order[a - 1]]
        group[a] = group[a - 1] + (gap > tol * max(1.0, abs(vals[order[a]])))
    peak = np.argmax(np.abs(V[:, order]), axis=0)
    return order[np.lexsort((peak, group))]


def solve_lapeig(graph: SimilarityGraph, l: int, method: str = "auto", tol: float = 1e-10,
                 seed: int = 0) -> Embedding:
    """Smallest ``l`` non-trivial generalized eigenpairs of ``L v = lambda D v``.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    :data:`DENSE_LIMIT` nodes). Columns of the result are D-orthonormal and
    D-orthogonal to the constant vector; each is signed so its largest
    magnitude entry is positive.
    """
    n = graph.n
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    if l >= n - 1:
        raise ValueError(f"need l < n - 1 (l={l}, n={n})")
    zero = np.flatnonzero(graph.degrees <= 0)
    if zero.size:
        raise ValueError(f"node {int(zero[0])} has zero degree; the generalized problem needs all degrees > 0")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"

    sqrt_d = np.sqrt(graph.degrees)
    inv_sqrt_d = 1.0 / sqrt_d
    S = sp.csr_matrix(sp.diags(inv_sqrt_d) @ graph.adjacency @ sp.diags(inv_sqrt_d))
    S = (S + S.T) * 0.5
    u0 = sqrt_d / np.linalg.norm(sqrt_d)
    Z, n_comp = _null_space(graph, sqrt_d)
    if n_comp > 1:
        msg = f"similarity graph has {n_comp} connected components; keeping {n_comp - 1} extra zero-eigenvalue directions"
        warnings.warn(msg)
        log.warning(msg)

    n_null = min(Z.shape[1], l)
    want = l - n_null
    # null directions (incl. the trivial one) are pushed to eigenvalue -2 of S
    B = np.column_stack([u0, Z])
    stats: dict = {"method": method, "components": n_comp}
    if want == 0:
        vals = np.zeros(0)
        U = np.zeros((n, 0))
        stats.update(iterations=0, residuals=[])
    elif method == "dense":
        Sd = S.toarray() - 3.0 * (B @ B.T)
        mu, Um = scipy.linalg.eigh(Sd, subset_by_index=[n - want, n - 1])
        vals = 1.0 - mu[::-1]
        U = Um[:, ::-1]
        N = np.eye(n) - S.toarray()
        stats.update(iterations=1, residuals=np.linalg.norm(N @ U - U * vals, axis=0).tolist())
    elif method == "lanczos":
        def matvec(x):
            return S @ x - 3.0 * (B @ (B.T @ x))

        mu, U, lstats = lanczos_largest(matvec, n, want, tol=tol, seed=seed)
        vals = 1.0 - mu
        stats.update(lstats)
    else:
        raise ValueError(f"unknown method {method!r}")

    U = np.column_stack([Z[:, :n_null], U])
    vals = np.concatenate([np.zeros(n_null), vals])
    U -= np.outer(u0, u0 @ U)
    U /= np.linalg.norm(U, axis=0)
    coords = _fix_signs(inv_sqrt_d[:, None] * U)
    order = _order_columns(vals, coords)
    return Embedding(coords[:, order], vals[order], stats)


def median_binarize(emb: Embedding) -> tuple[CodeMatrix, BinarizationThresholds]:
    """Threshold each column at its lower median; strictly above maps to +1."""
    n = emb.n
    if n == 0:
        raise ValueError("empty embedding")
    mid = (n - 1) // 2
    thresholds = np.partition(emb.coords, mid, axis=0)[mid]
    signs = np.where(emb.coords > thresholds, 1, -1).astype(np.int8)
    flat = np.flatnonzero(np.ptp(emb.coords, axis=0) == 0)
    if flat.size:
        warnings.warn(f"embedding column(s) {flat.tolist()} are constant; their bits are all off")
    return CodeMatrix(signs, np.arange(n)), BinarizationThresholds(thresholds)


def _signs(codes) -> np.ndarray:
    return (codes.signs if isinstance(codes, CodeMatrix) else np.asarray(codes)).astype(np.float64)


def weighted_hamming_objective(codes, graph: SimilarityGraph) -> float:
    """``1/4 * sum_ij W_ij ||y_i - y_j||^2`` summed edge by edge."""
    Y = _signs(codes)
    if Y.shape[0] != graph.n:
        raise ValueError(f"{Y.shape[0]} codes for a graph of {graph.n} nodes")
    W = graph.adjacency.tocoo()
    total = 0.0
    for i, j, w in zip(W.row.tolist(), W.col.tolist(), W.data.tolist()):
        diff = Y[i] - Y[j]
        total += w * float(diff @ diff)
    return 0.25 * total


def trace_objective(codes, graph: SimilarityGraph) -> float:
    Y = _signs(codes)
    return 0.25 * float(np.trace(Y.T @ (laplacian(graph) @ Y)))


def bit_correlations(codes) -> np.ndarray:
    """Pearson correlation matrix between bits (diagnostic only)."""
    Y = _signs(codes)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.corrcoef(Y, rowvar=False)


def save_embedding(emb: Embedding, thresholds: BinarizationThresholds | None, path) -> None:
    """Versioned text format: magic line, ``n l``, eigenvalues, thresholds, then rows."""
    n, l = emb.coords.shape
    thr = thresholds.values if thresholds is not None else np.full(l, np.nan)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{EMBEDDING_MAGIC} {EMBEDDING_VERSION}\n{n} {l}\n")
        fh.write(" ".join(repr(float(x)) for x in emb.eigenvalues) + "\n")
        fh.write(" ".join(repr(float(x)) for x in thr) + "\n")
        for row in emb.coords:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_embedding(path) -> tuple[Embedding, BinarizationThresholds]:
    with open(path, encoding="utf-8") as fh:
        magic, version = fh.readline().split()
        if magic != EMBEDDING_MAGIC or int(version) != EMBEDDING_VERSION:
            raise ValueError(f"{path}: not a version-{EMBEDDING_VERSION} embedding file")
        n, l = (int(t) for t in fh.readline().split())
        vals = np.array([float(t) for t in fh.readline().split()])
        thr = np.array([float(t) for t in fh.readline().split()])
        coords = np.array([[float(t) for t in fh.readline().split()] for _ in range(n)]).reshape(n, l)
    return Embedding(coords, vals), BinarizationThresholds(thr)
