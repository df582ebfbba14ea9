"""Seeded synthetic labelled text corpora for desk-scale experiments.

Documents are drawn from a topic mixture over pseudo-words: each topic owns a
Zipf-weighted set of core words (sets overlap between topics), and every
document mixes its own topic, one random secondary topic, a shared Zipfian
background vocabulary and common English stopwords.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["STOPWORDS", "synthetic_texts", "write_text_dir"]

_FILLER = ("the", "a", "of", "and", "to", "in", "is", "that", "it", "for", "on", "with", "as", "was", "be")
_ONSETS = ("b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl", "gr")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ou", "ea")


def _stopwords() -> frozenset:
    from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

    return frozenset(ENGLISH_STOP_WORDS)


STOPWORDS = _stopwords()


def _pseudo_words(rng: np.random.Generator, count: int) -> list[str]:
    words: list[str] = []
    seen = set(STOPWORDS)
    while len(words) < count:
        syl = rng.integers(2, 4)
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syl))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _zipf(n: int, s: float = 1.1) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


def synthetic_texts(n_docs: int, n_topics: int = 20, vocab: int = 3000, core: int = 120,
                    mean_length: int = 120, own: float = 0.25, secondary: float = 0.1,
                    seed: int = 0) -> list[tuple[str, str]]:
    """``(label, text)`` pairs; topics are assigned round-robin then shuffled."""
    rng = np.random.default_rng(seed)
    words = np.array(_pseudo_words(rng, vocab))
    background = _zipf(vocab)
    topic_words = [rng.choice(vocab, size=core, replace=False) for _ in range(n_topics)]
    topic_p = _zipf(core, 0.8)
    filler = np.array(_FILLER)
    labels = np.arange(n_docs) % n_topics
    rng.shuffle(labels)
    docs = []
    for t in labels.tolist():
        length = int(rng.poisson(mean_length)) + 20
        other = int(rng.integers(n_topics - 1))
        other += other >= t
        source = rng.choice(4, size=length, p=[own, secondary, 1 - own - secondary - 0.15, 0.15])
        tokens = np.empty(length, dtype=object)
        for src, pick in ((0, lambda k: words[topic_words[t][rng.choice(core, size=k, p=topic_p)]]),
                          (1, lambda k: words[topic_words[other][rng.choice(core, size=k, p=topic_p)]]),
                          (2, lambda k: words[rng.choice(vocab, size=k, p=background)]),
                          (3, lambda k: filler[rng.integers(len(filler), size=k)])):
            mask = source == src
            if mask.any():
                tokens[mask] = pick(int(mask.sum()))
        docs.append((f"topic{t:02d}", " ".join(tokens.tolist())))
    return docs


def write_text_dir(docs, root) -> Path:
    """Lay out ``(label, text)`` pairs as ``root/<label>/<nnnnn>.txt``."""
    root = Path(root)
    for i, (label, text) in enumerate(docs):
        d = root / label
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{i:05d}.txt").write_text(text + "\n", encoding="utf-8")
    return root
