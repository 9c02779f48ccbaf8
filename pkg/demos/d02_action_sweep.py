"""
Executing every action for one question
=======================================

The five actions combine a retrieval depth with a prompt mode, plus an
outright refusal. A sweep runs all of them and records the outcome flags.
"""

# %%
from ragslo.control import ACTIONS, sweep_question
from ragslo.corpus import Paragraph, parse_squad
from ragslo.desk import DeskCorpusConfig, desk_corpus_bytes
from ragslo.generation import PromptMode, SimulatedBackend, assemble_prompt
from ragslo.retriever import build_index

paragraphs, questions = parse_squad(desk_corpus_bytes(DeskCorpusConfig()))
index = build_index(paragraphs)
backend = SimulatedBackend()

for a in ACTIONS:
    print(a.id, a.label)

# %%
# The guarded prompt for a toy question.
print(assemble_prompt(PromptMode.GUARDED, [Paragraph(0, "Passage one."), Paragraph(1, "Passage two.")], "Who wrote it?"))

# %%
# Outcomes for one answerable and one unanswerable question.
for q in (next(q for q in questions if q.answerable), next(q for q in questions if not q.answerable)):
    print(f"\n{q.qid} answerable={q.answerable}: {q.question}")
    result = sweep_question(q, index, paragraphs, backend)
    for out in result.outcomes:
        f = out.flags
        print(
            f"  a{out.action.id} {out.action.label:<14} answer={out.answer_text!r:<24}"
            f" acc={f.acc} hall={f.hall} refuse={f.refusal} ref_ok={f.refusal_correct:+d}"
            f" cost={f.cost_tokens:4d} hit={f.hit}"
        )
