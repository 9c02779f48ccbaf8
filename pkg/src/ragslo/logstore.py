"""Offline replay log: full-action sweeps persisted as JSON lines.

File layout (schema version 1): one header object, then one object per
(qid, action) in sample order and ascending action id. Rewards are never
stored; they are derived from the raw outcome flags under whatever SLO
profile the reader chooses.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .control import ACTIONS, N_ACTIONS, ActionExecutionError, OutcomeFlags, SweepResult, sweep_question
from .corpus import Paragraph, QuestionExample
from .features import FeatureConfig, extract_features
from .generation import GeneratorBackend
from .retriever import InvertedIndex
from .slo import SloProfile, compute_reward

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIMESTAMP_FIELDS = ("timestamp", "created_at")


class LogIntegrityError(ValueError):
    def __init__(self, msg: str, qid: Optional[str] = None):
        super().__init__(msg)
        self.qid = qid


class LogVersionError(ValueError):
    pass


class FeatureDimensionError(ValueError):
    pass


class SweepAbortedError(RuntimeError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class LoggedRecord:
    qid: str
    action: int
    flags: OutcomeFlags
    answerable: bool
    answer_text: str
    retrieved_ids: tuple[int, ...]
    backend: str
    timestamp: str = ""


@dataclass
class LogDataset:
    header: dict
    qids: list[str]
    records: dict[str, tuple[LoggedRecord, ...]]
    features: dict[str, np.ndarray]

    def __len__(self):
        return len(self.qids)

    @property
    def feature_dim(self) -> int:
        return int(self.header["feature_dim"])

    def subset(self, qids: Sequence[str]) -> "LogDataset":
        return LogDataset(
            header=dict(self.header),
            qids=list(qids),
            records={q: self.records[q] for q in qids},
            features={q: self.features[q] for q in qids},
        )

    def feature_matrix(self) -> np.ndarray:
        if not self.qids:
            return np.zeros((0, self.feature_dim))
        return np.vstack([self.features[q] for q in self.qids])

    def reward_matrix(self, profile: SloProfile) -> np.ndarray:
        """Rewards of shape (n_questions, 5), recomputed from the logged flags."""
        out = np.empty((len(self.qids), N_ACTIONS))
        for i, q in enumerate(self.qids):
            for rec in self.records[q]:
                out[i, rec.action] = compute_reward(rec.flags, profile)
        return out


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _record_line(rec: LoggedRecord, features: Optional[np.ndarray]) -> str:
    f = rec.flags
    return _dumps(
        {
            "kind": "record",
            "qid": rec.qid,
            "action": rec.action,
            "answerable": rec.answerable,
            "acc": f.acc,
            "cost_tokens": f.cost_tokens,
            "hall": f.hall,
            "refusal": f.refusal,
            "refusal_correct": f.refusal_correct,
            "hit": f.hit,
            "answer_text": rec.answer_text,
            "retrieved_ids": list(rec.retrieved_ids),
            "features": None if features is None else [float(x) for x in features],
            "backend": rec.backend,
            "timestamp": rec.timestamp,
        }
    )


def _atomic_write_lines(path: Path, lines: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_log(dataset: LogDataset, path) -> None:
    lines = [_dumps(dataset.header)]
    for q in dataset.qids:
        for rec in dataset.records[q]:
            lines.append(_record_line(rec, dataset.features[q] if rec.action == 0 else None))
    _atomic_write_lines(Path(path), lines)


@dataclass
class SweepSummary:
    requested: int
    completed: int
    failed_qids: list[str] = field(default_factory=list)
    prompt_plus_completion_tokens: int = 0
    tokens_per_action: list[int] = field(default_factory=lambda: [0] * N_ACTIONS)

    def to_dict(self) -> dict:
        return {
            "requested": self.requested,
            "completed": self.completed,
            "failed": len(self.failed_qids),
            "failed_qids": self.failed_qids,
            "total_tokens": self.prompt_plus_completion_tokens,
            "tokens_per_action": self.tokens_per_action,
        }


def sample_examples(examples: Sequence[QuestionExample], sample_size: int, seed: int) -> list[QuestionExample]:
    if sample_size > len(examples):
        raise ValueError(f"sample_size {sample_size} exceeds the {len(examples)} available questions")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(examples), size=sample_size, replace=False)
    return [examples[int(i)] for i in picked]


def run_sweep(
    examples: Sequence[QuestionExample],
    index: InvertedIndex,
    paragraphs: Sequence[Paragraph],
    backend: GeneratorBackend,
    sample_size: int,
    seed: int,
    path,
    feature_config: FeatureConfig = FeatureConfig(),
    max_failure_fraction: float = 0.1,
    header_extra: Optional[dict] = None,
    clock: Callable[[], str] = _now,
) -> SweepSummary:
    """Sample questions without replacement, sweep all actions, write the log.

    Questions whose sweep fails are dropped and listed in the summary. The run
    aborts, leaving no log behind, when more than ``max_failure_fraction`` of
    the sample fails.
    """
    chosen = sample_examples(examples, sample_size, seed)
    if not chosen:
        logger.warning("sample_size=0: writing a header-only log")

    def one(ex: QuestionExample):
        try:
            return sweep_question(ex, index, paragraphs, backend)
        except ActionExecutionError as exc:
            logger.error("sweep failed: %s", exc)
            return exc

    workers = max(1, int(getattr(backend, "max_in_flight", 1)))
    if workers == 1:
        results = [one(ex) for ex in chosen]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, chosen))  # map preserves input order

    summary = SweepSummary(requested=len(chosen), completed=0)
    header = {
        "kind": "header",
        "schema_version": SCHEMA_VERSION,
        **feature_config.header(),
        "backend": backend.name,
        "seed": seed,
        "sample_size": sample_size,
        **(header_extra or {}),
        "created_at": clock(),
    }
    qids: list[str] = []
    records: dict[str, tuple[LoggedRecord, ...]] = {}
    feats: dict[str, np.ndarray] = {}
    for ex, res in zip(chosen, results):
        if not isinstance(res, SweepResult):
            summary.failed_qids.append(ex.qid)
            continue
        if ex.qid in records:
            raise LogIntegrityError(f"duplicate qid {ex.qid!r} in the question set", ex.qid)
        stamp = clock()
        recs = []
        for o in res.outcomes:
            recs.append(
                LoggedRecord(
                    qid=ex.qid,
                    action=o.action.id,
                    flags=o.flags,
                    answerable=ex.answerable,
                    answer_text=o.answer_text,
                    retrieved_ids=o.retrieval.doc_ids,
                    backend=backend.name,
                    timestamp=stamp,
                )
            )
            summary.prompt_plus_completion_tokens += o.flags.cost_tokens
            summary.tokens_per_action[o.action.id] += o.flags.cost_tokens
        qids.append(ex.qid)
        records[ex.qid] = tuple(recs)
        feats[ex.qid] = extract_features(ex, index, feature_config, probe=res.probe).vector
    summary.completed = len(qids)

    if chosen and len(summary.failed_qids) / len(chosen) > max_failure_fraction:
        raise SweepAbortedError(
            f"{len(summary.failed_qids)} of {len(chosen)} questions failed "
            f"(limit {max_failure_fraction:.0%}); no log written"
        )
    write_log(LogDataset(header, qids, records, feats), path)
    return summary


def _parse_record(obj: dict, lineno: int) -> LoggedRecord:
    try:
        flags = OutcomeFlags(
            acc=int(obj["acc"]),
            cost_tokens=int(obj["cost_tokens"]),
            hall=int(obj["hall"]),
            refusal=int(obj["refusal"]),
            refusal_correct=int(obj["refusal_correct"]),
            hit=None if obj["hit"] is None else int(obj["hit"]),
        )
        return LoggedRecord(
            qid=str(obj["qid"]),
            action=int(obj["action"]),
            flags=flags,
            answerable=bool(obj["answerable"]),
            answer_text=obj["answer_text"],
            retrieved_ids=tuple(int(x) for x in obj["retrieved_ids"]),
            backend=obj["backend"],
            timestamp=obj.get("timestamp", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LogIntegrityError(f"line {lineno}: malformed record ({exc})", obj.get("qid")) from exc


def read_log(path) -> LogDataset:
    """Load and validate a sweep log.

    Raises :class:`LogIntegrityError` naming the first qid whose five action
    records are not all present exactly once.
    """
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in f.read().split("\n") if ln.strip()]
    if not lines:
        raise LogIntegrityError(f"{path}: empty log, header missing")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise LogIntegrityError(f"{path}: first line is not a header")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise LogVersionError(f"{path}: schema version {header.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    dim = int(header["feature_dim"])

    grouped: dict[str, dict[int, LoggedRecord]] = {}
    qids: list[str] = []
    feats: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        obj = json.loads(line)
        rec = _parse_record(obj, lineno)
        if rec.qid not in grouped:
            grouped[rec.qid] = {}
            qids.append(rec.qid)
        if rec.action in grouped[rec.qid] or not 0 <= rec.action < N_ACTIONS:
            raise LogIntegrityError(f"qid {rec.qid!r}: duplicate or invalid action {rec.action}", rec.qid)
        grouped[rec.qid][rec.action] = rec
        if obj.get("features") is not None:
            vec = np.asarray(obj["features"], dtype=float)
            if vec.shape != (dim,):
                raise FeatureDimensionError(f"qid {rec.qid!r}: feature length {vec.size}, header says {dim}")
            if not np.all(np.isfinite(vec)):
                raise LogIntegrityError(f"qid {rec.qid!r}: non-finite feature value", rec.qid)
            feats[rec.qid] = vec

    records: dict[str, tuple[LoggedRecord, ...]] = {}
    for q in qids:
        missing = [a.id for a in ACTIONS if a.id not in grouped[q]]
        if missing:
            raise LogIntegrityError(f"qid {q!r}: incomplete sweep, missing action(s) {missing}", q)
        if q not in feats:
            raise LogIntegrityError(f"qid {q!r}: features missing", q)
        records[q] = tuple(grouped[q][a.id] for a in ACTIONS)
    return LogDataset(header, qids, records, feats)


def split_log(dataset: LogDataset, eval_fraction: Optional[float] = None, seed: int = 0) -> tuple[LogDataset, LogDataset]:
    """Seeded split by qid into (train, eval).

    Without ``eval_fraction`` the eval side gets 200 questions, or half the
    questions when fewer than 400 are available.
    """
    n = len(dataset)
    if n < 2:
        raise SplitError(f"need at least 2 questions to split, got {n}")
    if eval_fraction is None:
        n_eval = min(200, n // 2)
    else:
        if not 0 < eval_fraction < 1:
            raise SplitError("eval_fraction must lie strictly between 0 and 1")
        n_eval = min(max(int(round(eval_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    eval_idx = set(int(i) for i in perm[:n_eval])
    train_q = [q for i, q in enumerate(dataset.qids) if i not in eval_idx]
    eval_q = [q for i, q in enumerate(dataset.qids) if i in eval_idx]
    return dataset.subset(train_q), dataset.subset(eval_q)


def strip_timestamps(line: str) -> str:
    """A log line with its timestamp fields blanked, for determinism comparisons."""
    obj = json.loads(line)
    for k in TIMESTAMP_FIELDS:
        if k in obj:
            obj[k] = ""
    return _dumps(obj)
