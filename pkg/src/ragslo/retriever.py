"""Okapi BM25 over an inverted index of corpus paragraphs."""
from __future__ import annotations

import json
import math
import os
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Paragraph

K1 = 1.5
B = 0.75
INDEX_FORMAT_VERSION = 1

_SPLIT = re.compile(r"[^0-9a-z]+")


class IndexBuildError(ValueError):
    pass


def tokenize(s: str) -> list[str]:
    """Lowercase and split on anything that is not an ASCII letter or digit."""
    return [t for t in _SPLIT.split(s.lower()) if t]


@dataclass
class InvertedIndex:
    vocabulary: dict[str, int]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_length: float
    num_docs: int
    k1: float = K1
    b: float = B
    _tf: dict[str, dict[int, int]] = field(init=False, repr=False, compare=False)
    _idf: dict[str, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._tf = {t: dict(plist) for t, plist in self.postings.items()}
        self._idf = {t: idf(self.num_docs, df) for t, df in self.vocabulary.items()}

    def idf(self, term: str) -> float:
        return self._idf.get(term, 0.0)

    def tf(self, term: str, doc_id: int) -> int:
        return self._tf.get(term, {}).get(doc_id, 0)

    def to_dict(self) -> dict:
        return {
            "vocabulary": self.vocabulary,
            "postings": {t: [list(p) for p in plist] for t, plist in self.postings.items()},
            "doc_lengths": self.doc_lengths,
            "avg_doc_length": self.avg_doc_length,
            "num_docs": self.num_docs,
            "k1": self.k1,
            "b": self.b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InvertedIndex":
        return cls(
            vocabulary=dict(d["vocabulary"]),
            postings={t: [(int(a), int(b)) for a, b in plist] for t, plist in d["postings"].items()},
            doc_lengths=[int(x) for x in d["doc_lengths"]],
            avg_doc_length=float(d["avg_doc_length"]),
            num_docs=int(d["num_docs"]),
            k1=float(d["k1"]),
            b=float(d["b"]),
        )


@dataclass(frozen=True)
class RetrievalResult:
    doc_ids: tuple[int, ...] = ()
    scores: tuple[float, ...] = ()

    def __len__(self):
        return len(self.doc_ids)


def idf(num_docs: int, df: int) -> float:
    return math.log(1.0 + (num_docs - df + 0.5) / (df + 0.5))


def build_index(paragraphs: Sequence[Paragraph], k1: float = K1, b: float = B) -> InvertedIndex:
    if not paragraphs:
        raise IndexBuildError("cannot build an index over an empty corpus")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    for para in paragraphs:
        terms = tokenize(para.text)
        doc_lengths.append(len(terms))
        # Counter preserves first-occurrence order, so postings are deterministic
        for term, count in Counter(terms).items():
            postings.setdefault(term, []).append((para.id, count))
    vocabulary = {t: len(plist) for t, plist in postings.items()}
    num_docs = len(doc_lengths)
    return InvertedIndex(
        vocabulary=vocabulary,
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths) / num_docs,
        num_docs=num_docs,
        k1=k1,
        b=b,
    )


def _term_weight(index: InvertedIndex, term: str, tf: int, doc_len: int) -> float:
    if tf == 0:
        return 0.0
    norm = 1.0 - index.b + index.b * doc_len / index.avg_doc_length if index.avg_doc_length > 0 else 1.0
    return index.idf(term) * tf * (index.k1 + 1.0) / (tf + index.k1 * norm)


def score_bm25(index: InvertedIndex, query_terms: Iterable[str], doc_id: int) -> float:
    """BM25 score of one document. Repeated query terms contribute repeatedly."""
    if not 0 <= doc_id < index.num_docs:
        raise IndexError(f"doc_id {doc_id} outside [0, {index.num_docs})")
    dl = index.doc_lengths[doc_id]
    score = 0.0
    for term in query_terms:
        score += _term_weight(index, term, index.tf(term, doc_id), dl)
    return score


def retrieve_topk(index: InvertedIndex, query: str, k: int) -> RetrievalResult:
    """Top-k positively scoring paragraphs, ties broken by ascending id.

    Fewer than ``k`` results come back when fewer documents share a term
    with the query; zero-score documents are never returned.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return RetrievalResult()
    scores: dict[int, float] = {}
    for term in tokenize(query):
        for doc_id, tf in index.postings.get(term, ()):
            w = _term_weight(index, term, tf, index.doc_lengths[doc_id])
            scores[doc_id] = scores.get(doc_id, 0.0) + w
    ranked = sorted(((s, d) for d, s in scores.items() if s > 0.0), key=lambda x: (-x[0], x[1]))[:k]
    return RetrievalResult(
        doc_ids=tuple(d for _, d in ranked),
        scores=tuple(s for s, _ in ranked),
    )


def save_index(index: InvertedIndex, path, corpus_hash: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format_version": INDEX_FORMAT_VERSION, "corpus_hash": corpus_hash, "index": index.to_dict()}
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as f:
        json.dump(payload, f, separators=(",", ":"))
    os.replace(tmp, path)


def read_index_hash(path) -> str | None:
    """Corpus hash stored with a serialized index, or None if unreadable."""
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError):
        return None
    if payload.get("format_version") != INDEX_FORMAT_VERSION:
        return None
    return payload.get("corpus_hash")


def load_index(path, corpus_hash: str | None = None) -> InvertedIndex:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format_version") != INDEX_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported index format {payload.get('format_version')!r}")
    if corpus_hash is not None and payload.get("corpus_hash") != corpus_hash:
        raise ValueError(f"{path}: index was built from a different corpus")
    return InvertedIndex.from_dict(payload["index"])
