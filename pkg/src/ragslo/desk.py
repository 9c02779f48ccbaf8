"""Seeded synthetic corpora in the SQuAD 2.0 JSON layout.

The generated text is pseudo-words, but the structure mirrors SQuAD 2.0:
articles with paragraphs, each paragraph carrying answerable questions (the
answer is an entity token unique to that paragraph) and unanswerable ones.
Two knobs shape the retrieval landscape:

``question_fidelity``
    Share of an answerable question's content words drawn from its own
    paragraph; the rest come from unrelated paragraphs. Low values make
    retrieval miss the answer paragraph.
``unanswerable_overlap``
    Share of an unanswerable question's words drawn from the paragraph; the
    rest are words that occur nowhere in the corpus.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl", "gr", "sh")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ou")


@dataclass(frozen=True)
class DeskCorpusConfig:
    n_articles: int = 40
    paragraphs_per_article: int = 5
    questions_per_paragraph: int = 4
    unanswerable_fraction: float = 1 / 3
    paragraph_len: int = 60
    entities_per_paragraph: int = 3
    question_len: int = 6
    question_fidelity: float = 0.9
    unanswerable_overlap: float = 0.3
    common_vocab: int = 300
    topic_vocab: int = 40
    seed: int = 0


# A corpus shaped after the refusal-collapse setting: half the questions are
# unanswerable, answer paragraphs are long, and retrieval usually misses.
COLLAPSE_CONFIG = DeskCorpusConfig(
    n_articles=40,
    paragraphs_per_article=5,
    questions_per_paragraph=2,
    unanswerable_fraction=0.5,
    paragraph_len=140,
    question_len=6,
    question_fidelity=0.2,
    unanswerable_overlap=0.05,
    seed=7,
)


class _WordFactory:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()

    def word(self, syllables: int) -> str:
        while True:
            w = "".join(
                _ONSETS[self.rng.integers(len(_ONSETS))] + _VOWELS[self.rng.integers(len(_VOWELS))]
                for _ in range(syllables)
            )
            if w not in self.used and w not in ("a", "an", "the"):
                self.used.add(w)
                return w

    def words(self, n: int, syllables: int) -> list[str]:
        return [self.word(syllables) for _ in range(n)]


def make_desk_corpus(config: DeskCorpusConfig = DeskCorpusConfig()) -> dict:
    """Build the corpus as a SQuAD 2.0 style ``dict`` (serialize with :func:`desk_corpus_bytes`)."""
    rng = np.random.default_rng(config.seed)
    wf = _WordFactory(rng)
    common = wf.words(config.common_vocab, 2)

    # first pass: paragraph bodies
    paras = []  # (article idx, words, entities)
    titles = []
    for a in range(config.n_articles):
        titles.append(wf.word(3).capitalize())
        topic = wf.words(config.topic_vocab, 2)
        for _ in range(config.paragraphs_per_article):
            n_body = config.paragraph_len - config.entities_per_paragraph
            pool = np.array(topic + common)
            # topic words are sampled four times as often as common ones
            probs = np.array([4.0] * len(topic) + [1.0] * len(common))
            body = list(rng.choice(pool, size=n_body, p=probs / probs.sum()))
            entities = [wf.word(4).capitalize() for _ in range(config.entities_per_paragraph)]
            for e in entities:
                body.insert(int(rng.integers(len(body) + 1)), e)
            paras.append((a, body, entities))

    def sentence_text(words: list[str]) -> str:
        chunks = [words[i : i + 12] for i in range(0, len(words), 12)]
        return " ".join(" ".join([c[0].capitalize()] + c[1:]) + "." for c in chunks)

    n_questions = len(paras) * config.questions_per_paragraph
    n_unanswerable = int(round(config.unanswerable_fraction * n_questions))
    impossible = np.zeros(n_questions, dtype=bool)
    impossible[rng.permutation(n_questions)[:n_unanswerable]] = True

    data = [{"title": t, "paragraphs": []} for t in titles]
    qcount = 0
    for p_idx, (a, body, entities) in enumerate(paras):
        content = [w for w in body if w not in entities]
        qas = []
        for j in range(config.questions_per_paragraph):
            qid = f"desk{config.seed}-{qcount:05d}"
            unanswerable = bool(impossible[qcount])
            qcount += 1
            terms = []
            if unanswerable:
                for _ in range(config.question_len):
                    if rng.random() < config.unanswerable_overlap:
                        terms.append(content[rng.integers(len(content))])
                    else:
                        terms.append(wf.word(3))
                qas.append(
                    {
                        "id": qid,
                        "question": "What " + " ".join(terms) + "?",
                        "answers": [],
                        "plausible_answers": [{"text": entities[0], "answer_start": 0}],
                        "is_impossible": True,
                    }
                )
            else:
                answer = entities[j % len(entities)]
                for _ in range(config.question_len):
                    if rng.random() < config.question_fidelity:
                        terms.append(content[rng.integers(len(content))])
                    else:
                        _, other, _ = paras[int(rng.integers(len(paras)))]
                        terms.append(other[rng.integers(len(other))].lower())
                qas.append(
                    {
                        "id": qid,
                        "question": "What " + " ".join(terms) + "?",
                        "answers": [{"text": answer, "answer_start": 0}, {"text": "the " + answer, "answer_start": 0}],
                        "is_impossible": False,
                    }
                )
        data[a]["paragraphs"].append({"context": sentence_text(body), "qas": qas})
    return {"version": "v2.0", "desk_config": asdict(config), "data": data}


def desk_corpus_bytes(config: DeskCorpusConfig = DeskCorpusConfig()) -> bytes:
    return json.dumps(make_desk_corpus(config), sort_keys=True, separators=(",", ":")).encode("utf-8")
