"""Precision / recall / F1 over Hamming-ball retrieval.

Scores are macro-averaged: precision, recall and F1 are computed for each
query and then averaged arithmetically (mean of F1, not F1 of the means).
A query that retrieves nothing scores (0, 0, 0). Queries with no relevant
training documents are skipped and counted.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .hashcodes import BitCode, CodeMatrix, build_index, query
from .knn_graph import normalized_rows, top_k_cosine

__all__ = [
    "EvalReport",
    "GroundTruth",
    "ReportRow",
    "ground_truth_knn",
    "ground_truth_topic",
    "prf",
    "sweep",
]

REPORT_COLUMNS = ("method", "code_length", "radius", "mean_precision", "mean_recall", "mean_f1",
                  "n_queries", "n_empty")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    query_ids: tuple[int, ...]
    relevant: tuple[frozenset, ...]
    methodology: str
    k: int | None = None
    n_excluded: int = 0

    def __len__(self):
        return len(self.query_ids)


def ground_truth_knn(train: Corpus, queries: Corpus, k: int) -> GroundTruth:
    """Exact cosine top-``k`` training documents for every query."""
    if len(train) == 0:
        raise ValueError("empty training corpus")
    if not 1 <= k <= len(train):
        raise ValueError(f"k={k} must be in [1, {len(train)}]")
    Xn = normalized_rows(train)
    Q = queries.to_csr()
    m = Xn.shape[1]
    if Q.shape[1] != m:
        if Q.shape[1] > m and Q[:, m:].nnz:
            raise ValueError("queries use term indices beyond the training vocabulary")
        Q = Q[:, :m] if Q.shape[1] > m else sp.csr_matrix((Q.data, Q.indices, Q.indptr), shape=(Q.shape[0], m))
    norms = np.sqrt(np.asarray(Q.multiply(Q).sum(axis=1)).ravel())
    keep = np.flatnonzero(norms > 0)
    if keep.size < Q.shape[0]:
        warnings.warn(f"{Q.shape[0] - keep.size} zero-norm query document(s) excluded")
    Qn = Q[keep].multiply(1.0 / norms[keep, None]).tocsr()
    idx, _ = top_k_cosine(Qn, Xn, k)
    train_ids = train.doc_ids
    qids = queries.doc_ids[keep]
    rel = tuple(frozenset(train_ids[row].tolist()) for row in idx)
    return GroundTruth(tuple(qids.tolist()), rel, "knn", k, int(Q.shape[0] - keep.size))


def ground_truth_topic(train: Corpus, queries: Corpus) -> GroundTruth:
    """Relevant set of a query = training documents with the same label."""
    by_label: dict[str, set[int]] = {}
    for d in train.docs:
        if d.label is None:
            raise ValueError(f"training doc {d.doc_id} has no label")
        by_label.setdefault(d.label, set()).add(d.doc_id)
    rel = []
    for d in queries.docs:
        if d.label is None:
            raise ValueError(f"query doc {d.doc_id} has no label")
        rel.append(frozenset(by_label.get(d.label, ())))
    return GroundTruth(tuple(queries.doc_ids.tolist()), tuple(rel), "topic")


def prf(retrieved: Iterable[int], relevant: Iterable[int]) -> tuple[float, float, float]:
    retrieved = retrieved if isinstance(retrieved, (set, frozenset)) else set(retrieved)
    relevant = relevant if isinstance(relevant, (set, frozenset)) else set(relevant)
    hit = len(retrieved & relevant)
    p = hit / len(retrieved) if retrieved else 0.0
    r = hit / len(relevant) if relevant else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class ReportRow:
    method: str
    code_length: int
    radius: int
    mean_precision: float
    mean_recall: float
    mean_f1: float
    n_queries: int
    n_empty: int
    n_skipped: int = 0
    per_query: np.ndarray | None = field(default=None, repr=False)
    query_ids: np.ndarray | None = field(default=None, repr=False)


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    methodology: str = ""

    def row(self, method: str, code_length: int, radius: int) -> ReportRow:
        for r in self.rows:
            if (r.method, r.code_length, r.radius) == (method, code_length, radius):
                return r
        raise KeyError((method, code_length, radius))

    def extend(self, other: "EvalReport") -> "EvalReport":
        self.rows.extend(other.rows)
        return self

    def write_tsv(self, dest) -> None:
        """Summary TSV to a path or an open text stream."""
        if not hasattr(dest, "write"):
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                return self.write_tsv(fh)
        dest.write(f"# truth={self.methodology} aggregation=macro (per-query P,R,F1 then arithmetic mean; "
                   f"empty retrieval scores 0)\n")
        writer = csv.writer(dest, delimiter="\t", lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            writer.writerow([r.method, r.code_length, r.radius, f"{r.mean_precision:.6f}",
                             f"{r.mean_recall:.6f}", f"{r.mean_f1:.6f}", r.n_queries, r.n_empty])

    def write_per_query_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(("method", "code_length", "radius", "query_id", "precision", "recall", "f1", "n_retrieved"))
            for r in self.rows:
                for qid, (p, rec, f, nret) in zip(r.query_ids.tolist(), r.per_query.tolist()):
                    writer.writerow([r.method, r.code_length, r.radius, qid, f"{p:.6f}", f"{rec:.6f}",
                                     f"{f:.6f}", int(nret)])

    def plot_data(self, radius: int = 1) -> list[tuple[str, int, float, float]]:
        """Precision-recall curve points ``(method, code_length, recall, precision)`` at one radius."""
        return [(r.method, r.code_length, r.mean_recall, r.mean_precision)
                for r in self.rows if r.radius == radius]

    def write_plot_data(self, path, radius: int = 1) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(("method", "code_length", "recall", "precision"))
            for method, l, rec, p in self.plot_data(radius):
                writer.writerow([method, l, f"{rec:.6f}", f"{p:.6f}"])


def _evaluate(retrieved_lists, relevant) -> np.ndarray:
    out = np.zeros((len(relevant), 4))
    for q, (ret, rel) in enumerate(zip(retrieved_lists, relevant)):
        p, r, f = prf(ret, rel)
        out[q] = (p, r, f, len(ret))
    return out


def sweep(train_codes: CodeMatrix, query_codes: CodeMatrix, truth: GroundTruth,
          lengths: Sequence[int], radii: Sequence[int], method: str = "sth",
          use_index: bool = True) -> EvalReport:
    """Evaluate every ``(code length, radius)`` pair.

    Codes are truncated to their first ``l'`` bits; the index is rebuilt per
    length. With ``use_index=False`` retrieval is a linear Hamming scan.
    """
    pos = {doc_id: i for i, doc_id in enumerate(query_codes.doc_ids.tolist())}
    missing = [q for q in truth.query_ids if q not in pos]
    if missing:
        raise KeyError(f"no code for query doc_id(s) {missing[:10]}")
    active = [i for i, rel in enumerate(truth.relevant) if rel]
    skipped = len(truth.relevant) - len(active)
    rows_q = np.array([pos[truth.query_ids[i]] for i in active], dtype=np.int64)
    relevant = [truth.relevant[i] for i in active]
    qids = np.array([truth.query_ids[i] for i in active], dtype=np.int64)

    report = EvalReport(methodology=truth.methodology)
    for l in lengths:
        if l > train_codes.length or l > query_codes.length:
            raise ValueError(f"code length {l} exceeds trained length")
        tc = train_codes.truncate(l)
        qpacked = query_codes.truncate(l).packed()[rows_q]
        index = build_index(tc) if use_index else None
        tpacked = tc.packed()
        for r in radii:
            if not 0 <= r <= l:
                raise ValueError(f"radius {r} out of range for {l}-bit codes")
            if use_index:
                retrieved = [query(index, BitCode(int(c), l), r) for c in qpacked.tolist()]
            else:
                retrieved = [tc.doc_ids[np.bitwise_count(tpacked ^ c) <= r].tolist() for c in qpacked]
            scores = _evaluate(retrieved, relevant)
            mean = scores[:, :3].mean(axis=0) if len(relevant) else np.zeros(3)
            report.rows.append(ReportRow(method, l, r, float(mean[0]), float(mean[1]), float(mean[2]),
                                         len(relevant), int(np.sum(scores[:, 3] == 0)), skipped,
                                         scores, qids))
    return report
