import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sth.hashcodes import (
    BitCode,
    CodeIndex,
    CodeMatrix,
    ball,
    ball_masks,
    ball_size,
    build_index,
    hamming,
    load_index,
    query,
    query_with_distances,
    save_index,
)


def scan(codes: CodeMatrix, center: BitCode, r):
    """Linear oracle: bit-by-bit comparison of every stored code."""
    c = center.signs()
    return {int(d) for d, row in zip(codes.doc_ids, codes.signs) if int(np.sum(row != c)) <= r}


def random_codes(rng, n, l, ids=None):
    signs = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n, l))
    return CodeMatrix(signs, np.arange(n) if ids is None else ids)


def test_bitcode_string_roundtrip():
    c = BitCode.from_string("1000")
    assert c.value == 1 and str(c) == "1000"
    assert str(BitCode.from_string("0110")) == "0110"
    with pytest.raises(ValueError):
        BitCode(16, 4)
    with pytest.raises(ValueError):
        BitCode(0, 65)


def test_signs_roundtrip():
    s = np.array([1, -1, -1, 1, 1], dtype=np.int8)
    c = BitCode.from_signs(s)
    np.testing.assert_array_equal(c.signs(), s)
    assert str(c) == "10011"


def test_hamming_examples():
    a = BitCode.from_string("0000")
    assert hamming(a, a) == 0
    assert hamming(a, BitCode.from_string("1010")) == 2
    x = BitCode(0b1011001, 7)
    assert hamming(x, BitCode(x.value ^ 0b1111111, 7)) == 7
    with pytest.raises(ValueError):
        hamming(a, BitCode(0, 5))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 64).flatmap(lambda l: st.tuples(
    st.just(l), *(st.integers(0, 2**l - 1) for _ in range(3)))))
def test_hamming_is_metric_and_matches_signs(args):
    l, a, b, c = args
    A, B, C = BitCode(a, l), BitCode(b, l), BitCode(c, l)
    assert hamming(A, B) == hamming(B, A)
    assert (hamming(A, B) == 0) == (a == b)
    assert hamming(A, C) <= hamming(A, B) + hamming(B, C)
    diff = A.signs().astype(int) - B.signs().astype(int)
    assert hamming(A, B) == int(diff @ diff) // 4


def test_ball_radius_one_order():
    got = [str(c) for c in ball(BitCode.from_string("0000"), 1)]
    assert got == ["0000", "1000", "0100", "0010", "0001"]


def test_ball_radius_zero():
    c = BitCode(0b101, 3)
    assert list(ball(c, 0)) == [c]


def test_ball_errors():
    with pytest.raises(ValueError):
        list(ball(BitCode(0, 4), 5))
    with pytest.raises(ValueError):
        ball_size(4, 5)


def test_ball_size_values():
    assert ball_size(4, 1) == 5
    assert ball_size(16, 3) == 697
    assert ball_size(64, 4) - ball_size(64, 3) == 635376
    assert ball_size(64, 4) == 1 + 64 + 2016 + 41664 + 635376


def pascal(l, r):
    row = [1]
    for _ in range(l):
        row = [1] + [row[i] + row[i + 1] for i in range(len(row) - 1)] + [1]
    return sum(row[: r + 1])


@pytest.mark.parametrize("l", range(1, 13))
def test_ball_exhaustive_masks(l):
    for r in range(min(4, l) + 1):
        masks = ball_masks(l, r)
        dist = np.bitwise_count(masks)
        assert np.all(np.diff(dist) >= 0)
        for center in range(2**l):
            got = masks ^ np.uint64(center)
            assert np.unique(got).size == got.size == pascal(l, r)
            assert np.all(np.bitwise_count(got ^ np.uint64(center)) <= r)


@pytest.mark.parametrize("l", range(1, 9))
def test_ball_generator_exhaustive(l):
    for r in range(min(4, l) + 1):
        for v in range(2**l):
            center = BitCode(v, l)
            got = list(ball(center, r))
            dists = [hamming(center, c) for c in got]
            assert dists == sorted(dists) and max(dists) <= r
            assert len(set(got)) == len(got) == math.comb(l, 0) + sum(math.comb(l, i) for i in range(1, r + 1))


def test_index_buckets():
    codes = CodeMatrix(np.array([[1, -1], [1, -1]], dtype=np.int8), [5, 9])
    idx = build_index(codes)
    assert list(idx.buckets.values()) == [[5, 9]]
    codes = CodeMatrix(np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.int8), [0, 1, 2, 3])
    idx = build_index(codes)
    assert sorted(idx.bucket_sizes().tolist()) == [1, 1, 1, 1]
    assert idx.stats()["buckets"] == 4


def test_query_radius_l_returns_all(rng):
    codes = random_codes(rng, 50, 8)
    assert sorted(query(build_index(codes), BitCode(3, 8), 8)) == list(range(50))


def test_query_orders_by_distance_then_id():
    codes = CodeMatrix(np.array([[1, 1], [-1, -1], [1, -1], [-1, -1]], dtype=np.int8), [7, 3, 5, 1])
    got = query_with_distances(build_index(codes), BitCode(0, 2), 2)
    assert got == [(1, 0), (3, 0), (5, 1), (7, 2)]


@pytest.mark.parametrize("seed", range(20))
def test_query_matches_scan(seed):
    rng = np.random.default_rng(seed)
    l = int(rng.integers(1, 20))
    n = int(rng.integers(1, 300))
    codes = random_codes(rng, n, l, rng.permutation(10 * n)[:n])
    index = build_index(codes)
    for _ in range(10):
        center = BitCode(int(rng.integers(2**l)), l)
        r = int(rng.integers(0, min(l, 4) + 1))
        got = query(index, center, r)
        assert len(got) == len(set(got))
        assert set(got) == scan(codes, center, r)


def test_probe_and_scan_paths_agree(rng):
    # 200 docs at 16 bits: r <= 1 probes buckets, r >= 2 scans (ball_size 137 < 200 < 697)
    codes = random_codes(rng, 200, 16)
    index = build_index(codes)
    for r in range(4):
        for _ in range(20):
            center = BitCode(int(rng.integers(2**16)), 16)
            assert set(query(index, center, r)) == scan(codes, center, r)


def test_index_roundtrip(tmp_path, rng):
    codes = random_codes(rng, 40, 13, rng.permutation(100)[:40])
    idx = build_index(codes)
    save_index(idx, tmp_path / "i.bin")
    back = load_index(tmp_path / "i.bin")
    assert back.length == 13 and back.n == 40
    for v in range(0, 2**13, 97):
        c = BitCode(v, 13)
        assert query(back, c, 2) == query(idx, c, 2)
    save_index(back, tmp_path / "j.bin")
    assert (tmp_path / "i.bin").read_bytes() == (tmp_path / "j.bin").read_bytes()


def test_index_load_rejects_garbage(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"NOTINDEX" + bytes(16))
    with pytest.raises(ValueError, match="not an index"):
        load_index(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(b"STH")
    with pytest.raises(ValueError, match="truncated"):
        load_index(tmp_path / "short.bin")


def test_index_rejects_stray_bits():
    with pytest.raises(ValueError):
        CodeIndex(np.array([16], dtype=np.uint64), np.array([0]), 4)


def test_code_matrix_pack_and_truncate(rng):
    codes = random_codes(rng, 30, 64)
    back = CodeMatrix.from_packed(codes.packed(), 64, codes.doc_ids)
    assert back == codes
    short = codes.truncate(5)
    np.testing.assert_array_equal(short.packed(), codes.packed() & np.uint64(31))
    assert codes.code(3).truncate(5) == short.code(3)


def test_code_matrix_text_roundtrip(tmp_path, rng):
    codes = random_codes(rng, 12, 9, np.arange(100, 112))
    codes.save(tmp_path / "c.tsv")
    assert CodeMatrix.load(tmp_path / "c.tsv") == codes
