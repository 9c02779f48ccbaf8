"""State vector: hashed bag-of-words question embedding plus retrieval-score metadata."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .control import PROBE_K
from .corpus import QuestionExample
from .retriever import InvertedIndex, RetrievalResult, retrieve_topk, tokenize

DEFAULT_DIM = 256
META_NAMES = ("question_char_len", "question_token_count", "top1_score", "top1_top2_gap", "mean_top5_score")


@dataclass(frozen=True)
class FeatureConfig:
    """Embedding width and the divisors applied to the metadata features."""

    dim: int = DEFAULT_DIM
    char_scale: float = 100.0
    token_scale: float = 20.0
    score_scale: float = 10.0

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("feature dimension must be positive")

    @property
    def total_dim(self) -> int:
        return self.dim + len(META_NAMES)

    def header(self) -> dict:
        return {
            "feature_dim": self.total_dim,
            "embedding_dim": self.dim,
            "meta_features": list(META_NAMES),
            "scales": {"char": self.char_scale, "token": self.token_scale, "score": self.score_scale},
            "probe_k": PROBE_K,
        }

    @classmethod
    def from_header(cls, header: dict) -> "FeatureConfig":
        s = header["scales"]
        return cls(dim=int(header["embedding_dim"]), char_scale=s["char"], token_scale=s["token"], score_scale=s["score"])


@dataclass(frozen=True)
class StateFeatures:
    embedding: np.ndarray
    meta: np.ndarray = field(default_factory=lambda: np.zeros(len(META_NAMES)))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.embedding, self.meta])


@lru_cache(maxsize=65536)
def _hash_term(term: str, dim: int) -> tuple[int, float]:
    raw = term.encode("utf-8")
    bucket = int.from_bytes(hashlib.blake2b(raw, digest_size=8, person=b"bucket").digest(), "little") % dim
    sign_byte = hashlib.blake2b(raw, digest_size=1, person=b"sign").digest()[0]
    return bucket, (1.0 if sign_byte & 1 else -1.0)


def embed_question(question: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Signed feature hashing of unigram tokens, L2-normalized when nonzero."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    vec = np.zeros(dim)
    for term in tokenize(question):
        bucket, sign = _hash_term(term, dim)
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def retrieval_meta(question: str, probe: RetrievalResult, config: FeatureConfig) -> np.ndarray:
    scores = list(probe.scores)
    top1 = scores[0] if scores else 0.0
    top2 = scores[1] if len(scores) > 1 else 0.0
    top5 = scores[:5]
    mean5 = sum(top5) / len(top5) if top5 else 0.0
    return np.array(
        [
            len(question) / config.char_scale,
            len(tokenize(question)) / config.token_scale,
            top1 / config.score_scale,
            (top1 - top2) / config.score_scale,
            mean5 / config.score_scale,
        ]
    )


def extract_features(
    example: QuestionExample | str,
    index: InvertedIndex,
    config: FeatureConfig = FeatureConfig(),
    probe: Optional[RetrievalResult] = None,
) -> StateFeatures:
    """Features of one question. Only the question text is read, never its answers.

    The probe retrieval always runs at the deepest action depth, so the state
    does not depend on which action is later taken.
    """
    question = example if isinstance(example, str) else example.question
    if probe is None:
        probe = retrieve_topk(index, question, PROBE_K)
    return StateFeatures(embed_question(question, config.dim), retrieval_meta(question, probe, config))
