"""Per-bit linear SVM hash functions trained on self-taught labels.

Each bit ``p`` gets an L1-hinge linear SVM without bias,

    min_w  1/2 w.w + (C/n) sum_i max(0, 1 - y_i w.x_i),

solved in the dual by coordinate descent with random per-epoch permutations
and shrinking. Every dual variable lives in ``[0, C/n]``.

Model file layout (little-endian)::

    magic    8 bytes  b"STHMODEL"
    version  uint32   1
    l        uint32   number of bits
    m        uint64   vocabulary size
    C        float64
    weights  l x m float64, row p is the weight vector of bit p
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .corpus import Corpus, SparseDocVector
from .hashcodes import MAX_BITS, BitCode, CodeMatrix

__all__ = [
    "HashModel",
    "LinearModel",
    "TrainConfig",
    "dual_objective",
    "load_model",
    "predict_code",
    "predict_codes",
    "primal_objective",
    "save_model",
    "train_all",
    "train_bit",
]

log = logging.getLogger(__name__)

MODEL_MAGIC = b"STHMODEL"
MODEL_VERSION = 1
_HEADER = np.dtype([("magic", "S8"), ("version", "<u4"), ("l", "<u4"), ("m", "<u8"), ("C", "<f8")])


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    tolerance: float = 1e-3
    max_epochs: int = 1000
    seed: int = 0
    shrinking: bool = True

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bit_index: int = 0
    dual: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def decision(self, X: sp.csr_matrix) -> np.ndarray:
        return X @ self.weights


@dataclass(frozen=True, eq=False)
class HashModel:
    models: tuple[LinearModel, ...]
    vocab_size: int
    config: TrainConfig = TrainConfig()

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        for mdl in self.models:
            if mdl.weights.shape != (self.vocab_size,):
                raise ValueError(f"bit {mdl.bit_index}: weight length {mdl.weights.size} != vocab_size {self.vocab_size}")
            if not np.all(np.isfinite(mdl.weights)):
                raise ValueError(f"bit {mdl.bit_index}: non-finite weights")

    @property
    def length(self) -> int:
        return len(self.models)

    @property
    def weight_matrix(self) -> np.ndarray:
        if not hasattr(self, "_wm"):
            object.__setattr__(self, "_wm", np.vstack([m.weights for m in self.models]) if self.models
                               else np.zeros((0, self.vocab_size)))
        return self._wm

    @property
    def term_major(self) -> np.ndarray:
        """``m x l`` copy of the weights; one contiguous row per term for sparse dot products."""
        if not hasattr(self, "_tm"):
            object.__setattr__(self, "_tm", np.ascontiguousarray(self.weight_matrix.T))
        return self._tm

    def truncate(self, l: int) -> "HashModel":
        return HashModel(self.models[:l], self.vocab_size, self.config)

    def diagnostics(self) -> dict:
        return {
            "length": self.length,
            "vocab_size": self.vocab_size,
            "config": asdict(self.config),
            "bits": [m.diagnostics for m in self.models],
        }


@numba.njit(cache=True, nogil=True)
def _splitmix(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _dual_cd(data, indices, indptr, y, upper, tol, max_epochs, seed, shrinking, w, alpha, history):
    n = y.shape[0]
    qd = np.zeros(n)
    for i in range(n):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += data[jj] * data[jj]
        qd[i] = s
        if s == 0.0:
            # x_i = 0 never affects w; its hinge term is always active
            alpha[i] = upper
    order = np.arange(n)
    active = n
    pg_max_old = np.inf
    pg_min_old = -np.inf
    state = np.uint64(seed)
    epochs = 0
    gap = np.inf
    while epochs < max_epochs:
        epochs += 1
        for s in range(active - 1):
            state, r = _splitmix(state)
            j = s + np.int64(r % np.uint64(active - s))
            order[s], order[j] = order[j], order[s]
        pg_max = -np.inf
        pg_min = np.inf
        s = 0
        while s < active:
            i = order[s]
            if qd[i] == 0.0:
                s += 1
                continue
            g = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                g += w[indices[jj]] * data[jj]
            g = y[i] * g - 1.0
            pg = 0.0
            if alpha[i] == 0.0:
                if shrinking and g > pg_max_old:
                    active -= 1
                    order[s], order[active] = order[active], order[s]
                    continue
                if g < 0.0:
                    pg = g
            elif alpha[i] == upper:
                if shrinking and g < pg_min_old:
                    active -= 1
                    order[s], order[active] = order[active], order[s]
                    continue
                if g > 0.0:
                    pg = g
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if abs(pg) > 1e-12:
                old = alpha[i]
                new = old - g / qd[i]
                if new < 0.0:
                    new = 0.0
                elif new > upper:
                    new = upper
                alpha[i] = new
                d = (new - old) * y[i]
                for jj in range(indptr[i], indptr[i + 1]):
                    w[indices[jj]] += d * data[jj]
            s += 1
        if history.shape[0] > 0 and epochs <= history.shape[0]:
            ww = 0.0
            for t in range(w.shape[0]):
                ww += w[t] * w[t]
            loss = 0.0
            asum = 0.0
            for i in range(n):
                m = 0.0
                for jj in range(indptr[i], indptr[i + 1]):
                    m += w[indices[jj]] * data[jj]
                h = 1.0 - y[i] * m
                if h > 0.0:
                    loss += h
                asum += alpha[i]
            history[epochs - 1, 0] = 0.5 * ww + upper * loss
            history[epochs - 1, 1] = asum - 0.5 * ww
        gap = pg_max - pg_min
        if active == n and pg_max == -np.inf:
            gap = 0.0
        if gap <= tol:
            if active == n:
                break
            active = n
            pg_max_old = np.inf
            pg_min_old = -np.inf
            continue
        pg_max_old = pg_max if pg_max > 0.0 else np.inf
        pg_min_old = pg_min if pg_min < 0.0 else -np.inf
    return epochs, gap


def primal_objective(w: np.ndarray, X: sp.csr_matrix, y: np.ndarray, C: float) -> float:
    n = X.shape[0]
    margins = y * (X @ w)
    return 0.5 * float(w @ w) + (C / n) * float(np.maximum(0.0, 1.0 - margins).sum())


def dual_objective(alpha: np.ndarray, X: sp.csr_matrix, y: np.ndarray) -> float:
    w = X.T @ (alpha * y)
    return float(alpha.sum()) - 0.5 * float(w @ w)


def _as_csr(train) -> sp.csr_matrix:
    X = train.to_csr() if isinstance(train, Corpus) else sp.csr_matrix(train)
    if not np.all(np.isfinite(X.data)):
        raise ValueError("non-finite feature value")
    X = sp.csr_matrix(X, dtype=np.float64)
    X.sort_indices()
    return X


def _train(X: sp.csr_matrix, y: np.ndarray, cfg: TrainConfig, bit_index: int = 0,
           record_history: int = 0) -> LinearModel:
    n, m = X.shape
    if y.shape != (n,):
        raise ValueError(f"need {n} labels, got {y.shape}")
    if not np.all(np.abs(y) == 1):
        raise ValueError("labels must be +1 or -1")
    if n and (np.all(y > 0) or np.all(y < 0)):
        warnings.warn(f"bit {bit_index}: all labels are {int(y[0]):+d}; the model degenerates to one class")
    upper = cfg.C / n
    w = np.zeros(m)
    alpha = np.zeros(n)
    history = np.full((record_history, 2), np.nan)
    epochs, gap = _dual_cd(X.data, X.indices.astype(np.int64), X.indptr.astype(np.int64),
                           y.astype(np.float64), upper, cfg.tolerance, cfg.max_epochs,
                           cfg.seed, cfg.shrinking, w, alpha, history)
    primal = primal_objective(w, X, y, cfg.C)
    dual = dual_objective(alpha, X, y)
    accuracy = float(np.mean(np.where(X @ w > 0, 1, -1) == y)) if n else 1.0
    if epochs >= cfg.max_epochs and gap > cfg.tolerance:
        log.warning("bit %d: dual coordinate descent hit max_epochs=%d (gap %.3g)", bit_index, epochs, gap)
    diag = {
        "bit": bit_index,
        "epochs": int(epochs),
        "pg_gap": float(gap) if math.isfinite(gap) else None,
        "primal": primal,
        "dual": dual,
        "duality_gap": (primal - dual) / max(abs(primal), 1e-300),
        "train_accuracy": accuracy,
    }
    if record_history:
        diag["history"] = history[: min(epochs, record_history)].tolist()
    return LinearModel(w, bit_index, alpha, diag)


def train_bit(train, labels, cfg: TrainConfig = TrainConfig(), bit_index: int = 0,
              record_history: int = 0) -> LinearModel:
    """Fit one hash function. ``train`` is a Corpus or an ``n x m`` sparse matrix."""
    X = _as_csr(train)
    return _train(X, np.asarray(labels, dtype=np.float64), cfg, bit_index, record_history)


def train_all(train, codes: CodeMatrix | np.ndarray, cfg: TrainConfig = TrainConfig(),
              workers: int = 1) -> HashModel:
    """One independent SVM per code column, all sharing ``cfg.seed``."""
    X = _as_csr(train)
    Y = codes.signs if isinstance(codes, CodeMatrix) else np.asarray(codes)
    if Y.shape[0] != X.shape[0]:
        raise ValueError(f"{Y.shape[0]} code rows for {X.shape[0]} documents")
    if Y.shape[1] > MAX_BITS:
        raise ValueError(f"at most {MAX_BITS} bits supported")

    def fit(p):
        return _train(X, Y[:, p].astype(np.float64), cfg, p)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            models = list(pool.map(fit, range(Y.shape[1])))
    else:
        models = [fit(p) for p in range(Y.shape[1])]
    return HashModel(tuple(models), X.shape[1], cfg)


def predict_code(model: HashModel, x: SparseDocVector) -> BitCode:
    """Bit ``p`` is on iff ``w_p . x > 0``; cost is linear in the nonzeros of ``x``."""
    if x.nnz and x.indices[-1] >= model.vocab_size:
        raise IndexError(f"term index {int(x.indices[-1])} out of range for vocab_size {model.vocab_size}")
    scores = x.weights @ model.term_major[x.indices]
    return BitCode.from_signs(np.where(scores > 0, 1, -1))


def predict_codes(model: HashModel, corpus: Corpus) -> CodeMatrix:
    X = corpus.to_csr()
    if X.shape[1] > model.vocab_size:
        extra = X[:, model.vocab_size:]
        if extra.nnz:
            raise IndexError(f"corpus uses term indices beyond vocab_size {model.vocab_size}")
        X = X[:, : model.vocab_size]
    elif X.shape[1] < model.vocab_size:
        X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], model.vocab_size))
    scores = np.asarray(X @ model.weight_matrix.T)
    return CodeMatrix(np.where(scores > 0, 1, -1).astype(np.int8), corpus.doc_ids)


def save_model(model: HashModel, path, sidecar=None) -> None:
    header = np.array([(MODEL_MAGIC, MODEL_VERSION, model.length, model.vocab_size, model.config.C)], dtype=_HEADER)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(model.weight_matrix, dtype="<f8").tobytes())
    if sidecar is not None:
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(model.diagnostics(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_model(path, sidecar=None) -> HashModel:
    raw = open(path, "rb").read()
    header = np.frombuffer(raw[: _HEADER.itemsize], dtype=_HEADER)[0]
    if header["magic"] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    if header["version"] != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {header['version']}")
    l, m = int(header["l"]), int(header["m"])
    body = raw[_HEADER.itemsize:]
    if len(body) != l * m * 8:
        raise ValueError(f"{path}: expected {l} x {m} weights")
    W = np.frombuffer(body, dtype="<f8").reshape(l, m).astype(np.float64)
    cfg = TrainConfig(C=float(header["C"]))
    diags = [{} for _ in range(l)]
    if sidecar is not None:
        with open(sidecar, encoding="utf-8") as fh:
            meta = json.load(fh)
        cfg = TrainConfig(**meta["config"])
        diags = meta["bits"]
    return HashModel(tuple(LinearModel(W[p].copy(), p, None, diags[p]) for p in range(l)), m, cfg)
