import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sth.corpus import (
    Corpus,
    CorpusFormatError,
    SparseDocVector,
    Vocabulary,
    load_sparse,
    load_text_dir,
    save_sparse,
    split,
    tfidf_weight,
    tokenize_basic,
)


def write(tmp_path, text, name="c.sv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_maps_one_based_to_zero_based(tmp_path):
    c = load_sparse(write(tmp_path, "3 1:0.5 7:1.2\n"))
    assert len(c) == 1
    assert c[0].label == "3"
    assert c[0].entries == [(0, 0.5), (6, 1.2)]
    assert c.vocab_size == 7


def test_load_empty_file(tmp_path):
    c = load_sparse(write(tmp_path, ""))
    assert len(c) == 0 and c.vocab_size == 0


def test_comments_and_blank_lines(tmp_path):
    c = load_sparse(write(tmp_path, "# header\n\na 2:1 # trailing\nb 1:3\n"))
    assert [d.label for d in c] == ["a", "b"]
    assert [d.doc_id for d in c] == [0, 1]


@pytest.mark.parametrize("line, needle", [
    ("1 5:0.1 5:0.2", "duplicate"),
    ("1 5:0.1 3:0.2", "ascending"),
    ("1 2:-0.5", "negative"),
    ("1 2:abc", "idx:weight"),
    ("1 0:1", ">= 1"),
    ("1 2:nan", "non-finite"),
])
def test_malformed_lines_name_the_line(tmp_path, line, needle):
    with pytest.raises(CorpusFormatError, match=needle) as err:
        load_sparse(write(tmp_path, "ok 1:1\n" + line + "\n"))
    assert err.value.line == 2
    assert "line 2" in str(err.value)


def test_unlabelled_lines(tmp_path):
    c = load_sparse(write(tmp_path, "1:1 3:2\n"))
    assert c[0].label is None
    assert c[0].entries == [(0, 1.0), (2, 2.0)]


def test_doc_ids_unique_and_indices_bounded():
    d = SparseDocVector.from_entries(0, [(0, 1.0)])
    with pytest.raises(ValueError, match="duplicate doc_id"):
        Corpus((d, d), 3)
    with pytest.raises(ValueError, match="vocab_size"):
        Corpus((SparseDocVector.from_entries(0, [(5, 1.0)]),), 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(
    st.tuples(
        st.sampled_from(["a", "b", "3"]),
        st.dictionaries(st.integers(0, 40), st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=8),
    ),
    max_size=10,
))
def test_save_load_roundtrip(tmp_path_factory, rows):
    docs = tuple(SparseDocVector.from_entries(i * 3 + 1, sorted(e.items()), lab) for i, (lab, e) in enumerate(rows))
    c = Corpus(docs, 50)
    p = tmp_path_factory.mktemp("rt") / "c.sv"
    save_sparse(c, p)
    assert load_sparse(p) == c


def _raw(rows, m):
    return Corpus(tuple(SparseDocVector.from_entries(i, e, None) for i, e in enumerate(rows)), m)


def test_tfidf_drops_terms_in_every_document():
    raw = _raw([[(0, 1.0), (1, 1.0)], [(0, 2.0), (2, 1.0)]], 3)
    out = tfidf_weight(raw)
    assert all(0 not in d.indices for d in out)


def test_tfidf_hand_value():
    # term 3 appears once (tf=2) among 4 docs: weight 2 * ln(4 / 1)
    raw = _raw([[(0, 1.0), (3, 2.0)], [(0, 1.0), (1, 1.0)], [(1, 1.0)], [(2, 1.0)]], 4)
    out = tfidf_weight(raw)
    assert dict(out[0].entries)[3] == pytest.approx(2 * math.log(4))


def test_tfidf_empty():
    assert len(tfidf_weight(Corpus((), 0))) == 0


def test_tfidf_matches_recount_oracle(rng):
    rows = []
    for _ in range(30):
        idx = np.flatnonzero(rng.random(25) < 0.3)
        rows.append([(int(t), float(rng.integers(1, 5))) for t in idx])
    raw = _raw(rows, 25)
    out = {d.doc_id: dict(d.entries) for d in tfidf_weight(raw)}
    n = len(rows)
    for i, r in enumerate(rows):
        for t, tf in r:
            df = sum(any(tt == t for tt, _ in other) for other in rows)
            expected = tf * math.log(n / df)
            if expected > 0:
                assert out[i][t] == pytest.approx(expected, rel=1e-12)
            else:
                assert t not in out.get(i, {})


def test_tfidf_excludes_documents_that_become_empty():
    raw = _raw([[(0, 1.0)], [(0, 1.0), (1, 1.0)]], 2)
    with pytest.warns(UserWarning, match="excluded"):
        out = tfidf_weight(raw)
    assert [d.doc_id for d in out] == [1]


def test_tokenize_basic():
    assert tokenize_basic("The cat sat", {"the"}) == Counter(cat=1, sat=1)
    assert tokenize_basic("", set()) == Counter()
    assert tokenize_basic("cat cat CAT", set()) == Counter(cat=3)
    assert tokenize_basic("e-mail, foo_bar!", set()) == Counter(e=1, mail=1, foo=1, bar=1)


def test_vocabulary_vectorize_sorted():
    v = Vocabulary()
    d1 = v.vectorize(Counter(b=1, a=2), 0)
    d2 = v.vectorize(Counter(a=1, c=4), 1)
    assert d1.entries == [(0, 1.0), (1, 2.0)]
    assert d2.entries == [(1, 1.0), (2, 4.0)]
    assert v.terms() == ["b", "a", "c"]


def test_load_text_dir(tmp_path):
    for label, texts in {"sport": ["ball game", "game over"], "art": ["paint the wall"]}.items():
        (tmp_path / label).mkdir()
        for i, t in enumerate(texts):
            (tmp_path / label / f"{i}.txt").write_text(t)
    c, vocab = load_text_dir(tmp_path, {"the"})
    assert [d.label for d in c] == ["art", "sport", "sport"]
    assert len(vocab) == 5
    with pytest.raises(FileNotFoundError):
        load_text_dir(tmp_path / "missing")


def _n_docs(n):
    return Corpus(tuple(SparseDocVector.from_entries(i, [(0, 1.0)]) for i in range(n)), 1)


def test_split_sizes_and_partition():
    train, test = split(_n_docs(10), 0.6, seed=3)
    assert len(train) == 6 and len(test) == 4
    assert set(train.doc_ids) | set(test.doc_ids) == set(range(10))
    assert not set(train.doc_ids) & set(test.doc_ids)
    assert train.role == "train" and test.role == "test"


def test_split_deterministic():
    a = split(_n_docs(50), 0.6, seed=9)
    b = split(_n_docs(50), 0.6, seed=9)
    assert a[0] == b[0] and a[1] == b[1]


def test_split_rounding_rule():
    # floor(0.6 * 9394 + 0.5) = floor(5636.9) = 5636
    train, test = split(_n_docs(9394), 0.6, seed=0)
    assert (len(train), len(test)) == (5636, 3758)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
def test_split_rejects_bad_fraction(fraction):
    with pytest.raises(ValueError):
        split(_n_docs(5), fraction, 0)
