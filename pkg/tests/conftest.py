import json

import pytest

from ragslo.corpus import parse_squad
from ragslo.desk import COLLAPSE_CONFIG, DeskCorpusConfig, desk_corpus_bytes
from ragslo.generation import SimulatedBackend
from ragslo.logstore import read_log, run_sweep
from ragslo.retriever import build_index


def squad_doc(articles):
    """articles: list of (title, [(context, [(qid, question, answers, impossible)])])."""
    data = []
    for title, paras in articles:
        data.append(
            {
                "title": title,
                "paragraphs": [
                    {
                        "context": ctx,
                        "qas": [
                            {
                                "id": qid,
                                "question": q,
                                "answers": [{"text": a, "answer_start": 0} for a in answers],
                                "is_impossible": imp,
                            }
                            for qid, q, answers, imp in qas
                        ],
                    }
                    for ctx, qas in paras
                ],
            }
        )
    return json.dumps({"version": "v2.0", "data": data}).encode()


@pytest.fixture(scope="session")
def desk():
    paragraphs, questions = parse_squad(desk_corpus_bytes(DeskCorpusConfig()))
    return paragraphs, questions, build_index(paragraphs)


@pytest.fixture(scope="session")
def desk_log(tmp_path_factory, desk):
    paragraphs, questions, index = desk
    path = tmp_path_factory.mktemp("desk") / "sweep.jsonl"
    run_sweep(questions, index, paragraphs, SimulatedBackend(), 120, 0, path)
    return path, read_log(path)


@pytest.fixture(scope="session")
def collapse():
    paragraphs, questions = parse_squad(desk_corpus_bytes(COLLAPSE_CONFIG))
    return paragraphs, questions, build_index(paragraphs)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
