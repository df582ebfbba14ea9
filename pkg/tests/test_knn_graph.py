import numpy as np
import pytest

from conftest import random_corpus
from sth.corpus import Corpus, SparseDocVector
from sth.knn_graph import build_knn_graph, cosine, knn_of, load_graph, save_graph


def doc(i, entries, label=None):
    return SparseDocVector.from_entries(i, entries, label)


def brute_cosines(corpus):
    X = corpus.to_csr().toarray()
    n = X.shape[0]
    S = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            S[i, j] = X[i] @ X[j] / (np.linalg.norm(X[i]) * np.linalg.norm(X[j]))
    return S


def brute_neighbours(S, i, k):
    cands = [j for j in range(S.shape[0]) if j != i]
    # similarities equal to 12 places are ties, broken by lowest index
    cands.sort(key=lambda j: (-round(S[i, j], 12), j))
    return cands[:k]


def brute_graph(corpus, k):
    S = brute_cosines(corpus)
    n = len(corpus)
    nbrs = [set(brute_neighbours(S, i, k)) for i in range(n)]
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and (i in nbrs[j] or j in nbrs[i]):
                W[i, j] = S[i, j]
    return W


def test_cosine_examples():
    a = doc(0, [(0, 1.0), (1, 2.0)])
    b = doc(1, [(1, 2.0), (2, 1.0)])
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine(a, doc(2, [(5, 3.0)])) == 0.0
    assert cosine(a, b) == pytest.approx(0.8)


def test_cosine_zero_norm():
    with pytest.raises(ValueError, match="zero-norm"):
        cosine(doc(0, []), doc(1, [(0, 1.0)]))


@pytest.mark.parametrize("seed", range(8))
def test_graph_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    k = int(rng.integers(1, min(6, n - 1) + 1))
    corpus = random_corpus(rng, n, 12, density=0.25)
    g = build_knn_graph(corpus, k)
    W = g.adjacency.toarray()
    np.testing.assert_allclose(W, brute_graph(corpus, k), atol=1e-12)
    assert np.array_equal(W, W.T)
    assert np.all(np.diag(W) == 0)
    np.testing.assert_allclose(g.degrees, W.sum(axis=1), rtol=1e-14)
    # hubs may exceed 2k neighbours; only the total is bounded by 2kn
    positive = (brute_cosines(corpus) > 0).sum(axis=1) - 1
    assert np.all((W != 0).sum(axis=1) >= np.minimum(k, positive))
    assert g.nnz <= 2 * k * n


def test_three_similar_docs_k1():
    c = Corpus((doc(0, [(0, 1.0), (1, 0.1)]), doc(1, [(0, 1.0), (1, 0.2)]), doc(2, [(0, 0.2), (1, 1.0)])), 2)
    W = build_knn_graph(c, 1).adjacency.toarray()
    np.testing.assert_allclose(W, brute_graph(c, 1), atol=1e-12)
    assert W[0, 1] > 0 and W[1, 2] > 0 and W[0, 2] == 0


def test_orthogonal_documents_give_empty_graph():
    c = Corpus(tuple(doc(i, [(i, 1.0)]) for i in range(5)), 5)
    g = build_knn_graph(c, 2)
    assert g.nnz == 0
    assert np.all(g.degrees == 0)
    assert g.isolated.tolist() == [0, 1, 2, 3, 4]


def test_duplicates_are_mutual_neighbours():
    c = Corpus((doc(0, [(0, 1.0), (3, 2.0)]), doc(1, [(1, 1.0)]), doc(2, [(0, 1.0), (3, 2.0)])), 4)
    W = build_knn_graph(c, 1).adjacency.toarray()
    assert W[0, 2] == pytest.approx(1.0) and W[2, 0] == pytest.approx(1.0)


def test_errors():
    c = Corpus((doc(0, [(0, 1.0)]), doc(1, [(0, 2.0)])), 1)
    with pytest.raises(ValueError, match="smaller than"):
        build_knn_graph(c, 2)
    bad = Corpus((doc(0, [(0, 1.0)]), doc(7, []), doc(2, [(0, 1.0)])), 1)
    with pytest.raises(ValueError, match="doc_id \\[7\\]"):
        build_knn_graph(bad, 1)


def test_knn_of_examples():
    c = Corpus((doc(0, [(0, 1.0)]), doc(1, [(0, 3.0)])), 1)
    assert [j for j, _ in knn_of(c, 0, 1)] == [1]
    ties = Corpus(tuple(doc(i, [(0, 1.0)]) for i in range(6)), 1)
    assert [j for j, _ in knn_of(ties, 3, 3)] == [0, 1, 2]
    with pytest.raises(IndexError):
        knn_of(c, 5, 1)


def test_knn_of_matches_exhaustive_scan():
    rng = np.random.default_rng(4)
    c = random_corpus(rng, 20, 10)
    S = brute_cosines(c)
    for i in range(20):
        got = knn_of(c, i, 5)
        assert [j for j, _ in got] == brute_neighbours(S, i, 5)
        np.testing.assert_allclose([s for _, s in got], [S[i, j] for j in brute_neighbours(S, i, 5)])


def test_parallel_rows_identical(rng):
    c = random_corpus(rng, 1100, 30, density=0.1)
    a = build_knn_graph(c, 5, workers=1).adjacency
    b = build_knn_graph(c, 5, workers=3).adjacency
    assert (a != b).nnz == 0


def test_graph_roundtrip(tmp_path, rng):
    g = build_knn_graph(random_corpus(rng, 30, 8), 3)
    save_graph(g, tmp_path / "g.txt")
    h = load_graph(tmp_path / "g.txt")
    assert (h.n, h.k) == (g.n, g.k)
    assert (h.adjacency != g.adjacency).nnz == 0
    np.testing.assert_array_equal(h.degrees, g.degrees)
    first = (tmp_path / "g.txt").read_text().splitlines()
    assert first[0] == "30 3"
    assert all(int(line.split()[0]) < int(line.split()[1]) for line in first[1:])
