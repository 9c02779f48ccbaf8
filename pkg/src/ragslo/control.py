"""The five-action control space and single-question execution."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import Paragraph, QuestionExample, contains_answer, em_match
from .generation import (
    REFUSAL_MESSAGE,
    BackendError,
    GeneratorBackend,
    PromptMode,
    count_tokens,
    detect_refusal,
)
from .retriever import InvertedIndex, RetrievalResult, retrieve_topk

PROBE_K = 10


@dataclass(frozen=True)
class Action:
    id: int
    retrieval_k: int
    mode: Optional[PromptMode]  # None means refuse

    @property
    def refuses(self) -> bool:
        return self.mode is None

    @property
    def label(self) -> str:
        if self.refuses:
            return "refuse"
        return f"k={self.retrieval_k},{self.mode.value}"


ACTIONS: tuple[Action, ...] = (
    Action(0, 2, PromptMode.GUARDED),
    Action(1, 5, PromptMode.GUARDED),
    Action(2, 10, PromptMode.GUARDED),
    Action(3, 5, PromptMode.AUTO),
    Action(4, 0, None),
)
N_ACTIONS = len(ACTIONS)
REFUSE_ACTION = 4


@dataclass(frozen=True)
class OutcomeFlags:
    acc: int
    cost_tokens: int
    hall: int
    refusal: int
    refusal_correct: int
    hit: Optional[int] = None

    def __post_init__(self):
        if self.refusal and (self.acc or self.hall):
            raise ValueError("a refusal can be neither accurate nor a hallucination")
        if self.cost_tokens < 0:
            raise ValueError("cost_tokens must be >= 0")
        if self.refusal_correct not in (-1, 0, 1):
            raise ValueError("refusal_correct must be -1, 0 or +1")


class ActionExecutionError(RuntimeError):
    def __init__(self, qid: str, action_id: int, cause: Exception):
        super().__init__(f"question {qid!r}, action {action_id}: {cause}")
        self.qid = qid
        self.action_id = action_id
        self.cause = cause


def outcome_flags(
    example: QuestionExample, answer_text: str, cost_tokens: int, passages: Sequence[Paragraph], retrieved: bool
) -> OutcomeFlags:
    refusal = int(detect_refusal(answer_text))
    answerable = example.answerable
    acc = int(not refusal and answerable and em_match(answer_text, example.gold_answers))
    hall = int(not answerable and not refusal)
    if refusal:
        refusal_correct = -1 if answerable else 1
    else:
        refusal_correct = 0
    hit = None
    if answerable and retrieved:
        hit = int(any(contains_answer(p.text, example.gold_answers) for p in passages))
    return OutcomeFlags(acc, cost_tokens, hall, refusal, refusal_correct, hit)


def execute_action(
    example: QuestionExample,
    action: Action,
    index: InvertedIndex,
    paragraphs: Sequence[Paragraph],
    backend: GeneratorBackend,
    probe: Optional[RetrievalResult] = None,
) -> tuple[OutcomeFlags, RetrievalResult, str]:
    """Run one (question, action) pair end to end.

    ``probe`` may hold the top-``PROBE_K`` result for the same question; its
    prefix equals the shallower top-k, so it is reused instead of re-querying.
    """
    if action.refuses:
        flags = outcome_flags(example, REFUSAL_MESSAGE, count_tokens(REFUSAL_MESSAGE), (), retrieved=False)
        return flags, RetrievalResult(), REFUSAL_MESSAGE

    k = action.retrieval_k
    if probe is not None and k <= PROBE_K:
        retrieval = RetrievalResult(probe.doc_ids[:k], probe.scores[:k])
    else:
        retrieval = retrieve_topk(index, example.question, k)
    passages = [paragraphs[d] for d in retrieval.doc_ids]
    try:
        out = backend.generate(action.mode, passages, example)
    except BackendError as exc:
        raise ActionExecutionError(example.qid, action.id, exc) from exc
    flags = outcome_flags(example, out.answer_text, out.total_tokens, passages, retrieved=True)
    return flags, retrieval, out.answer_text


@dataclass(frozen=True)
class ActionOutcome:
    action: Action
    flags: OutcomeFlags
    retrieval: RetrievalResult
    answer_text: str


@dataclass(frozen=True)
class SweepResult:
    example: QuestionExample
    outcomes: tuple[ActionOutcome, ...]
    probe: RetrievalResult


def sweep_question(
    example: QuestionExample,
    index: InvertedIndex,
    paragraphs: Sequence[Paragraph],
    backend: GeneratorBackend,
    probe: Optional[RetrievalResult] = None,
) -> SweepResult:
    """Execute every action for one question, in ascending action order.

    Any failing action raises :class:`ActionExecutionError`; partial sweeps are
    never returned.
    """
    if probe is None:
        probe = retrieve_topk(index, example.question, PROBE_K)
    outcomes = []
    for action in ACTIONS:
        flags, retrieval, answer = execute_action(example, action, index, paragraphs, backend, probe)
        outcomes.append(ActionOutcome(action, flags, retrieval, answer))
    return SweepResult(example, tuple(outcomes), probe)
