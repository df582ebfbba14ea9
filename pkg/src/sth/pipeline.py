"""End-to-end learning: k-NN graph -> eigenmap -> median bits -> per-bit SVMs."""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .corpus import Corpus, Vocabulary, tfidf_weight, tokenize_basic
from .hashcodes import MAX_BITS, CodeMatrix
from .hashfn import HashModel, TrainConfig, predict_codes, train_all
from .knn_graph import SimilarityGraph, build_knn_graph
from .spectral import BinarizationThresholds, Embedding, median_binarize, solve_lapeig

__all__ = ["StageError", "TrainResult", "corpus_from_texts", "train_sth"]

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        super().__init__(f"stage {stage} failed: {cause}")


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except Exception as exc:
        raise StageError(name, exc) from exc
    timings[name] = time.perf_counter() - t0


@dataclass
class TrainResult:
    graph: SimilarityGraph
    embedding: Embedding
    thresholds: BinarizationThresholds
    codes: CodeMatrix
    model: HashModel
    timings: dict = field(default_factory=dict)

    def diagnostics(self) -> dict:
        predicted = self.predicted_train_codes
        return {
            "n": int(self.codes.n),
            "k": int(self.graph.k),
            "bits": int(self.codes.length),
            "graph_nnz": self.graph.nnz,
            "eigenvalues": self.embedding.eigenvalues.tolist(),
            "eigensolver": self.embedding.solver_stats,
            "bit_on_counts": self.codes.on_counts().tolist(),
            "bit_train_accuracy": [m.diagnostics.get("train_accuracy") for m in self.model.models],
            "bit_agreement": (predicted.signs == self.codes.signs).mean(axis=0).tolist() if predicted else None,
            "timings_sec": self.timings,
        }

    predicted_train_codes: CodeMatrix | None = None


def corpus_from_texts(docs: Iterable[tuple[str, str]], stopwords=(), vocab: Vocabulary | None = None) -> tuple[Corpus, Vocabulary]:
    """TF-IDF corpus from ``(label, text)`` pairs; doc ids are positions in ``docs``."""
    vocab = vocab if vocab is not None else Vocabulary()
    stop = set(stopwords)
    raw = [vocab.vectorize(tokenize_basic(text, stop), i, label) for i, (label, text) in enumerate(docs)]
    return tfidf_weight(Corpus(tuple(raw), len(vocab))), vocab


def train_sth(train: Corpus, k: int = 25, bits: int = 16, svm: TrainConfig = TrainConfig(),
              workers: int = 1, eig_method: str = "auto") -> TrainResult:
    if not 1 <= bits <= MAX_BITS:
        raise ValueError(f"bits must be in [1, {MAX_BITS}], got {bits}")
    timings: dict = {}
    with _stage("graph", timings):
        graph = build_knn_graph(train, k, workers=workers)
    with _stage("eigen", timings):
        emb = solve_lapeig(graph, bits, method=eig_method, seed=svm.seed)
    with _stage("binarize", timings):
        codes, thresholds = median_binarize(emb)
        codes = CodeMatrix(codes.signs, train.doc_ids)
    with _stage("svm", timings):
        model = train_all(train, codes, svm, workers=workers)

    result = TrainResult(graph, emb, thresholds, codes, model, timings)
    result.predicted_train_codes = predict_codes(model, train)
    log.info("trained %d-bit model on %d docs in %.2fs", bits, len(train), sum(timings.values()))
    return result
