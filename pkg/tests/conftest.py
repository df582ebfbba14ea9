import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from sth.corpus import Corpus, SparseDocVector, split
from sth.datasets import STOPWORDS, synthetic_texts
from sth.knn_graph import SimilarityGraph
from sth.pipeline import corpus_from_texts, train_sth

DESK_DOCS = 2000
DESK_SEED = 11


def random_corpus(rng, n, m, density=0.3, label_count=3):
    docs = []
    for i in range(n):
        while True:
            mask = rng.random(m) < density
            if mask.any():
                break
        idx = np.flatnonzero(mask)
        docs.append(SparseDocVector(i, idx, rng.random(idx.size) + 0.05, f"t{rng.integers(label_count)}"))
    return Corpus(tuple(docs), m)


def random_graph(rng, n, k):
    """Random symmetric weighted graph that is connected (ring plus k-ish random chords)."""
    W = np.zeros((n, n))
    for i in range(n):
        W[i, (i + 1) % n] = rng.random() + 0.1
        for j in rng.choice(n, size=min(k, n - 1), replace=False):
            if j != i:
                W[i, j] = rng.random() + 0.1
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0)
    A = sp.csr_matrix(W)
    return SimilarityGraph(n, A, np.asarray(A.sum(axis=1)).ravel(), k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_corpus():
    docs = synthetic_texts(DESK_DOCS, seed=DESK_SEED)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        corpus, _ = corpus_from_texts(docs, STOPWORDS)
    return corpus


@pytest.fixture(scope="session")
def desk_split(desk_corpus):
    return split(desk_corpus, 0.6, 7)


@pytest.fixture(scope="session")
def desk_model(desk_split):
    train, _ = desk_split
    return train_sth(train, k=25, bits=16)
