import json
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ragslo.corpus import (
    CorpusParseError,
    CorpusSchemaError,
    QuestionExample,
    contains_answer,
    corpus_manifest,
    em_match,
    normalize_text,
    parse_squad,
)

from .conftest import squad_doc


def test_parse_counts():
    raw = squad_doc(
        [
            (
                "T",
                [
                    ("First paragraph.", [("q1", "a?", ["x"], False), ("q2", "b?", [], True)]),
                    ("Second paragraph.", [("q3", "c?", ["y"], False)]),
                ],
            )
        ]
    )
    paragraphs, questions = parse_squad(raw)
    assert len(paragraphs) == 2
    assert len(questions) == 3
    assert [p.id for p in paragraphs] == [0, 1]
    assert paragraphs[1].title == "T"
    assert [q.source_paragraph for q in questions] == [0, 0, 1]
    assert corpus_manifest(paragraphs, questions) == {
        "paragraphs": 2,
        "questions": 3,
        "answerable": 2,
        "unanswerable": 1,
    }


def test_impossible_question_maps_to_unanswerable():
    _, (q,) = parse_squad(squad_doc([("T", [("ctx", [("q", "?", [], True)])])]))
    assert q.answerable is False
    assert q.gold_answers == ()


def test_gold_answers_deduplicated_after_normalization():
    raw = squad_doc([("T", [("ctx", [("q", "?", ["Denver Broncos", "the Denver Broncos", "Broncos"], False)])])])
    _, (q,) = parse_squad(raw)
    assert q.gold_answers == ("Denver Broncos", "Broncos")


def test_whitespace_only_answers_make_question_unanswerable():
    _, (q,) = parse_squad(squad_doc([("T", [("ctx", [("q", "?", ["  "], False)])])]))
    assert not q.answerable


def test_parse_accepts_str_and_file(tmp_path):
    raw = squad_doc([("T", [("ctx", [("q", "?", ["a1"], False)])])])
    p = tmp_path / "s.json"
    p.write_bytes(raw)
    with open(p, "rb") as f:
        assert parse_squad(f)[1] == parse_squad(raw.decode())[1]


def test_malformed_json_names_position():
    with pytest.raises(CorpusParseError, match="line 1"):
        parse_squad(b'{"data": [')


@pytest.mark.parametrize(
    "doc, where",
    [
        ({}, r"\$: missing required field 'data'"),
        ({"data": [{"title": "t"}]}, r"\$\.data\[0\]: missing required field 'paragraphs'"),
        ({"data": [{"paragraphs": [{"qas": []}]}]}, r"paragraphs\[0\]: missing required field 'context'"),
        (
            {"data": [{"paragraphs": [{"context": "c", "qas": [{"id": "x", "answers": []}]}]}]},
            r"qas\[0\]: missing required field 'question'",
        ),
    ],
)
def test_schema_errors_name_path(doc, where):
    with pytest.raises(CorpusSchemaError, match=where):
        parse_squad(json.dumps(doc))


def test_question_example_invariants():
    with pytest.raises(ValueError):
        QuestionExample("q", "?", answerable=True, gold_answers=())
    with pytest.raises(ValueError):
        QuestionExample("q", "?", answerable=False, gold_answers=("x",))


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("The Eiffel Tower!", "eiffel tower"),
        ("", ""),
        ("An  apple,  a day.", "apple day"),
        ("  THE  ", ""),
        ("theatre", "theatre"),
    ],
)
def test_normalize_text(raw, expected):
    assert normalize_text(raw) == expected


def test_em_match_examples():
    assert em_match("eiffel tower", ["The Eiffel Tower"])
    assert not em_match("anything", [])
    assert not em_match("the answer is 42", ["42"])


def test_contains_answer_normalized_substring():
    assert contains_answer("He was born in New-York City.", ["new york"]) is False  # hyphen is dropped, not spaced
    assert contains_answer("He was born in New York City.", ["NEW YORK"])
    assert not contains_answer("anything", ["the"])  # empty after normalization


@given(st.text())
def test_normalize_idempotent(s):
    assert normalize_text(normalize_text(s)) == normalize_text(s)


@given(st.text(), st.text())
def test_em_match_symmetric(p, g):
    assert em_match(p, [g]) == em_match(g, [p])


@given(st.lists(st.tuples(st.booleans(), st.lists(st.text(min_size=1, max_size=5), max_size=3)), max_size=8))
def test_every_qa_appears_exactly_once(qas):
    raw = squad_doc([("T", [("ctx", [(f"q{i}", "?", ans, imp) for i, (imp, ans) in enumerate(qas)])])])
    _, questions = parse_squad(raw)
    assert [q.qid for q in questions] == [f"q{i}" for i in range(len(qas))]


SQUAD_DEV = os.environ.get("SQUAD_DEV_PATH")


@pytest.mark.skipif(not SQUAD_DEV, reason="set SQUAD_DEV_PATH to the official dev-v2.0.json")
def test_official_dev_file():
    with open(SQUAD_DEV, "rb") as f:
        paragraphs, questions = parse_squad(f)
    assert len(paragraphs) == 1204
    assert len(questions) == 11873
    by_id = {q.qid: q for q in questions}
    q = by_id["56ddde6b9a695914005b9628"]
    assert "Normandy" in paragraphs[q.source_paragraph].text
