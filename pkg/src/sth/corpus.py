"""Sparse document vectors, the on-disk sparse format, TF-IDF and splitting.

File format (one document per line)::

    <label> [id:<doc_id>] <idx>:<weight> <idx>:<weight> ...

Term indices are 1-based and strictly ascending on disk, 0-based in memory.
``#`` starts a comment that runs to the end of the line. A line whose first
token already has the ``idx:weight`` shape carries no label. When ``id:`` is
absent the document id is its ordinal among the documents in the file.
A leading ``# vocab_size: N`` comment pins the vocabulary size; otherwise it
is one past the largest index seen.
"""

from __future__ import annotations

import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Corpus",
    "CorpusFormatError",
    "SparseDocVector",
    "Vocabulary",
    "load_sparse",
    "load_text_dir",
    "save_sparse",
    "split",
    "tfidf_weight",
    "tokenize_basic",
]

_TOKEN_RE = re.compile(r"[^\W_]+")
_VOCAB_RE = re.compile(r"^#\s*vocab_size:\s*(\d+)\s*$")


class CorpusFormatError(ValueError):
    """Raised for malformed sparse-vector input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class SparseDocVector:
    """One document: sorted 0-based term indices with their weights."""

    doc_id: int
    indices: np.ndarray
    weights: np.ndarray
    label: str | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if idx.shape != w.shape or idx.ndim != 1:
            raise ValueError("indices and weights must be 1-d arrays of equal length")
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise ValueError(f"doc {self.doc_id}: term indices must be >= 0 and strictly increasing")
        if not np.all(np.isfinite(w)):
            raise ValueError(f"doc {self.doc_id}: non-finite weight")
        if np.any(w < 0):
            raise ValueError(f"doc {self.doc_id}: negative weight")
        idx.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_entries(cls, doc_id: int, entries: Iterable[tuple[int, float]], label: str | None = None):
        entries = list(entries)
        idx = [t for t, _ in entries]
        w = [v for _, v in entries]
        return cls(doc_id, np.array(idx, dtype=np.int64), np.array(w, dtype=np.float64), label)

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.weights.tolist()))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.weights, self.weights)))

    def scaled(self, factor: float) -> "SparseDocVector":
        return SparseDocVector(self.doc_id, self.indices, self.weights * factor, self.label)

    def __eq__(self, other):
        if not isinstance(other, SparseDocVector):
            return NotImplemented
        return (
            self.doc_id == other.doc_id
            and self.label == other.label
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.doc_id, self.label, self.indices.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True, eq=False)
class Corpus:
    """An ordered, immutable collection of documents over a fixed vocabulary."""

    docs: tuple[SparseDocVector, ...]
    vocab_size: int
    role: str = "train"
    _csr: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        docs = tuple(self.docs)
        object.__setattr__(self, "docs", docs)
        seen = set()
        for d in docs:
            if d.doc_id in seen:
                raise ValueError(f"duplicate doc_id {d.doc_id}")
            seen.add(d.doc_id)
            if d.nnz and d.indices[-1] >= self.vocab_size:
                raise ValueError(
                    f"doc {d.doc_id}: term index {d.indices[-1]} >= vocab_size {self.vocab_size}"
                )
        if self.role not in ("train", "test"):
            raise ValueError(f"role must be 'train' or 'test', got {self.role!r}")

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[SparseDocVector]:
        return iter(self.docs)

    def __getitem__(self, i: int) -> SparseDocVector:
        return self.docs[i]

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.vocab_size == other.vocab_size and self.role == other.role and self.docs == other.docs

    @property
    def doc_ids(self) -> np.ndarray:
        return np.array([d.doc_id for d in self.docs], dtype=np.int64)

    @property
    def labels(self) -> list[str | None]:
        return [d.label for d in self.docs]

    def to_csr(self) -> sp.csr_matrix:
        """Documents as rows of an ``n x vocab_size`` CSR matrix (cached)."""
        if self._csr is None:
            indptr = np.zeros(len(self.docs) + 1, dtype=np.int64)
            for i, d in enumerate(self.docs):
                indptr[i + 1] = indptr[i] + d.nnz
            if self.docs:
                indices = np.concatenate([d.indices for d in self.docs])
                data = np.concatenate([d.weights for d in self.docs])
            else:
                indices = np.zeros(0, dtype=np.int64)
                data = np.zeros(0)
            X = sp.csr_matrix((data, indices, indptr), shape=(len(self.docs), self.vocab_size))
            object.__setattr__(self, "_csr", X)
        return self._csr

    def with_role(self, role: str) -> "Corpus":
        return Corpus(self.docs, self.vocab_size, role)

    def subset(self, positions: Sequence[int], role: str | None = None) -> "Corpus":
        return Corpus(tuple(self.docs[i] for i in positions), self.vocab_size, role or self.role)


def _parse_line(line: str, lineno: int) -> tuple[str | None, int | None, list[tuple[int, float]]] | None:
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    tokens = body.split()
    label = None
    doc_id = None
    if ":" not in tokens[0]:
        label = tokens.pop(0)
    if tokens and tokens[0].startswith("id:"):
        try:
            doc_id = int(tokens.pop(0)[3:])
        except ValueError:
            raise CorpusFormatError("bad id: token", lineno) from None
    entries = []
    prev = 0
    for tok in tokens:
        head, sep, tail = tok.partition(":")
        if not sep:
            raise CorpusFormatError(f"expected idx:weight, got {tok!r}", lineno)
        try:
            idx = int(head)
            w = float(tail)
        except ValueError:
            raise CorpusFormatError(f"expected idx:weight, got {tok!r}", lineno) from None
        if idx < 1:
            raise CorpusFormatError(f"term index must be >= 1, got {idx}", lineno)
        if idx == prev:
            raise CorpusFormatError(f"duplicate term index {idx}", lineno)
        if idx < prev:
            raise CorpusFormatError(f"term indices not ascending ({idx} after {prev})", lineno)
        if not math.isfinite(w):
            raise CorpusFormatError(f"non-finite weight for term {idx}", lineno)
        if w < 0:
            raise CorpusFormatError(f"negative weight for term {idx}", lineno)
        entries.append((idx - 1, w))
        prev = idx
    return label, doc_id, entries


def load_sparse(path, vocab_size: int | None = None, role: str = "train") -> Corpus:
    """Read a sparse-vector file into a :class:`Corpus`, preserving line order."""
    docs = []
    declared = None
    max_idx = -1
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            m = _VOCAB_RE.match(line.strip())
            if m:
                declared = int(m.group(1))
                continue
            parsed = _parse_line(line, lineno)
            if parsed is None:
                continue
            label, doc_id, entries = parsed
            if doc_id is None:
                doc_id = len(docs)
            if entries:
                max_idx = max(max_idx, entries[-1][0])
            docs.append(SparseDocVector.from_entries(doc_id, entries, label))
    if vocab_size is None:
        vocab_size = declared if declared is not None else max_idx + 1
    if max_idx >= vocab_size:
        raise CorpusFormatError(f"term index {max_idx + 1} exceeds vocab_size {vocab_size}")
    return Corpus(tuple(docs), vocab_size, role)


def save_sparse(corpus: Corpus, path) -> None:
    """Write ``corpus`` in the sparse-vector format. Floats use ``repr`` so reload is exact."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# vocab_size: {corpus.vocab_size}\n")
        for d in corpus.docs:
            parts = [d.label if d.label is not None else "-", f"id:{d.doc_id}"]
            parts.extend(f"{i + 1}:{w!r}" for i, w in zip(d.indices.tolist(), d.weights.tolist()))
            fh.write(" ".join(parts) + "\n")


def tfidf_weight(raw: Corpus) -> Corpus:
    """Reweight term counts as ``tf * ln(n / df)``.

    Terms present in every document get weight 0 and are dropped. Documents
    left with no entries are excluded with a warning, since cosine similarity
    is undefined for them.
    """
    n = len(raw)
    if n == 0:
        return raw
    df = np.zeros(raw.vocab_size, dtype=np.int64)
    for d in raw.docs:
        df[d.indices] += 1
    idf = np.zeros(raw.vocab_size)
    present = df > 0
    idf[present] = np.log(n / df[present])

    docs = []
    dropped = []
    for d in raw.docs:
        w = d.weights * idf[d.indices]
        keep = w > 0
        if not keep.any():
            dropped.append(d.doc_id)
            continue
        docs.append(SparseDocVector(d.doc_id, d.indices[keep], w[keep], d.label))
    if dropped:
        warnings.warn(f"{len(dropped)} document(s) have zero TF-IDF weight and were excluded: {dropped[:10]}")
    return Corpus(tuple(docs), raw.vocab_size, raw.role)


def tokenize_basic(text: str, stopwords: Iterable[str] = ()) -> Counter:
    """Lowercase, split on non-alphanumerics, drop stopwords, count."""
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    return Counter(t for t in _TOKEN_RE.findall(text.lower()) if t not in stop)


class Vocabulary:
    """Term -> 0-based index map that grows as documents are vectorized."""

    def __init__(self, terms: Iterable[str] = ()):
        self.index: dict[str, int] = {}
        for t in terms:
            self.add(t)

    def __len__(self):
        return len(self.index)

    def add(self, term: str) -> int:
        return self.index.setdefault(term, len(self.index))

    def vectorize(self, counts: Counter, doc_id: int, label: str | None = None, grow: bool = True) -> SparseDocVector:
        pairs = []
        for term, c in counts.items():
            idx = self.add(term) if grow else self.index.get(term)
            if idx is not None:
                pairs.append((idx, float(c)))
        pairs.sort()
        return SparseDocVector.from_entries(doc_id, pairs, label)

    def terms(self) -> list[str]:
        out = [""] * len(self.index)
        for t, i in self.index.items():
            out[i] = t
        return out


def load_text_dir(root, stopwords: Iterable[str] = (), vocab: Vocabulary | None = None) -> tuple[Corpus, Vocabulary]:
    """Ingest ``root/<label>/<file>`` text documents as a corpus of raw term counts.

    Labels and files are visited in sorted order so doc ids are stable.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    vocab = vocab if vocab is not None else Vocabulary()
    stop = set(stopwords)
    docs = []
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(p for p in label_dir.iterdir() if p.is_file()):
            text = f.read_text(encoding="utf-8", errors="replace")
            counts = tokenize_basic(text, stop)
            docs.append(vocab.vectorize(counts, len(docs), label_dir.name))
    return Corpus(tuple(docs), len(vocab)), vocab


def split(corpus: Corpus, fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Random train/test partition with ``floor(fraction * n + 0.5)`` training docs.

    Both parts keep the original document order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(corpus)
    if n == 0:
        raise ValueError("cannot split an empty corpus")
    n_train = int(math.floor(fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    train_pos = np.sort(perm[:n_train])
    test_pos = np.sort(perm[n_train:])
    return corpus.subset(train_pos.tolist(), "train"), corpus.subset(test_pos.tolist(), "test")
