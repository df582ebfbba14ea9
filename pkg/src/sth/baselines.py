"""Sign random-projection LSH, the data-oblivious baseline.

A model is fully determined by ``(seed, l, m)``: the projection matrix is
``numpy.random.default_rng(seed).standard_normal((l, m))`` (PCG64 bit
generator, ziggurat normal sampler), so only those three numbers are stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus, SparseDocVector
from .hashcodes import BitCode, CodeMatrix

__all__ = ["LshModel", "load_lsh", "lsh_code", "lsh_codes", "lsh_train", "save_lsh"]


@dataclass(frozen=True, eq=False)
class LshModel:
    seed: int
    length: int
    vocab_size: int
    projections: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, LshModel):
            return NotImplemented
        return (self.seed, self.length, self.vocab_size) == (other.seed, other.length, other.vocab_size) \
            and np.array_equal(self.projections, other.projections)


def lsh_train(m: int, l: int, seed: int) -> LshModel:
    if m < 1 or l < 1:
        raise ValueError(f"m and l must be >= 1 (got m={m}, l={l})")
    P = np.random.default_rng(seed).standard_normal((l, m))
    return LshModel(seed, l, m, P)


def _signs(scores) -> np.ndarray:
    return np.where(np.asarray(scores) > 0, 1, -1).astype(np.int8)


def lsh_code(model: LshModel, x) -> BitCode:
    """Code of one vector: a SparseDocVector or a dense length-``m`` array."""
    if isinstance(x, SparseDocVector):
        if x.nnz and x.indices[-1] >= model.vocab_size:
            raise IndexError(f"term index {int(x.indices[-1])} out of range for vocab_size {model.vocab_size}")
        scores = model.projections[:, x.indices] @ x.weights
    else:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (model.vocab_size,):
            raise IndexError(f"expected a vector of length {model.vocab_size}, got shape {x.shape}")
        scores = model.projections @ x
    return BitCode.from_signs(_signs(scores))


def lsh_codes(model: LshModel, corpus: Corpus) -> CodeMatrix:
    X = corpus.to_csr()
    if X.shape[1] != model.vocab_size:
        if X.shape[1] > model.vocab_size and X[:, model.vocab_size:].nnz:
            raise IndexError(f"corpus uses term indices beyond vocab_size {model.vocab_size}")
        X = sp.csr_matrix(X[:, : model.vocab_size]) if X.shape[1] > model.vocab_size else \
            sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], model.vocab_size))
    return CodeMatrix(_signs(X @ model.projections.T), corpus.doc_ids)


def save_lsh(model: LshModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"kind": "sign-lsh", "generator": "numpy.PCG64/standard_normal",
                   "seed": model.seed, "length": model.length, "vocab_size": model.vocab_size},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_lsh(path) -> LshModel:
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    return lsh_train(meta["vocab_size"], meta["length"], meta["seed"])
