"""SQuAD 2.0 ingestion and answer-string normalization."""
from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from typing import IO, Sequence, Union


class CorpusParseError(ValueError):
    """Input is not valid JSON."""


class CorpusSchemaError(ValueError):
    """Input is JSON but does not follow the SQuAD 2.0 layout."""


@dataclass(frozen=True)
class Paragraph:
    id: int
    text: str
    title: str = ""


@dataclass(frozen=True)
class QuestionExample:
    qid: str
    question: str
    answerable: bool
    gold_answers: tuple[str, ...] = field(default_factory=tuple)
    source_paragraph: int = -1

    def __post_init__(self):
        if self.answerable and not self.gold_answers:
            raise ValueError(f"answerable question {self.qid!r} has no gold answers")
        if not self.answerable and self.gold_answers:
            raise ValueError(f"unanswerable question {self.qid!r} carries gold answers")


_PUNCT = set(string.punctuation)
_ARTICLES = re.compile(r"\b(a|an|the)\b", re.UNICODE)


def normalize_text(s: str) -> str:
    """Lowercase, drop punctuation and English articles, collapse whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def em_match(prediction: str, golds: Sequence[str]) -> bool:
    pred = normalize_text(prediction)
    return any(pred == normalize_text(g) for g in golds)


def contains_answer(text: str, golds: Sequence[str]) -> bool:
    """Case-insensitive substring test of any gold answer against ``text``, both normalized."""
    haystack = normalize_text(text)
    for g in golds:
        needle = normalize_text(g)
        if needle and needle in haystack:
            return True
    return False


def _require(obj, key, path):
    if not isinstance(obj, dict):
        raise CorpusSchemaError(f"{path}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise CorpusSchemaError(f"{path}: missing required field {key!r}")
    return obj[key]


def _require_list(obj, key, path):
    value = _require(obj, key, path)
    if not isinstance(value, list):
        raise CorpusSchemaError(f"{path}.{key}: expected a list")
    return value


def _dedup_answers(answers, path) -> tuple[str, ...]:
    # dedup on normalized form, keep the first surface string seen;
    # whitespace-only answers are dropped
    seen: set[str] = set()
    out: list[str] = []
    for j, ans in enumerate(answers):
        text = _require(ans, "text", f"{path}[{j}]")
        if not isinstance(text, str):
            raise CorpusSchemaError(f"{path}[{j}].text: expected a string")
        if not text.strip():
            continue
        key = normalize_text(text)
        if key in seen:
            continue
        seen.add(key)
        out.append(text)
    return tuple(out)


def parse_squad(
    raw_json: Union[bytes, str, IO],
) -> tuple[list[Paragraph], list[QuestionExample]]:
    """Parse a SQuAD 2.0 JSON document into paragraphs and questions.

    Paragraph ids follow ingestion order. A qa whose ``is_impossible`` flag
    is false but whose answers are all blank is treated as unanswerable.
    """
    if hasattr(raw_json, "read"):
        raw_json = raw_json.read()
    try:
        doc = json.loads(raw_json)
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"$: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc

    paragraphs: list[Paragraph] = []
    questions: list[QuestionExample] = []
    for a, article in enumerate(_require_list(doc, "data", "$")):
        apath = f"$.data[{a}]"
        title = article.get("title", "") if isinstance(article, dict) else ""
        for p, para in enumerate(_require_list(article, "paragraphs", apath)):
            ppath = f"{apath}.paragraphs[{p}]"
            context = _require(para, "context", ppath)
            if not isinstance(context, str) or not context:
                raise CorpusSchemaError(f"{ppath}.context: expected a non-empty string")
            pid = len(paragraphs)
            paragraphs.append(Paragraph(id=pid, text=context, title=str(title)))
            for q, qa in enumerate(_require_list(para, "qas", ppath)):
                qpath = f"{ppath}.qas[{q}]"
                qid = _require(qa, "id", qpath)
                question = _require(qa, "question", qpath)
                answers = _require_list(qa, "answers", qpath)
                impossible = bool(qa.get("is_impossible", False))
                golds = () if impossible else _dedup_answers(answers, f"{qpath}.answers")
                questions.append(
                    QuestionExample(
                        qid=str(qid),
                        question=str(question),
                        answerable=bool(golds),
                        gold_answers=golds,
                        source_paragraph=pid,
                    )
                )
    return paragraphs, questions


def corpus_manifest(paragraphs: Sequence[Paragraph], questions: Sequence[QuestionExample]) -> dict:
    n_ans = sum(q.answerable for q in questions)
    return {
        "paragraphs": len(paragraphs),
        "questions": len(questions),
        "answerable": n_ans,
        "unanswerable": len(questions) - n_ans,
    }
