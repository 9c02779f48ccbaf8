"""
BM25 retrieval over a SQuAD 2.0 style corpus
============================================

Builds an inverted index over a generated corpus and shows the scores and
ordering that every retrieval action draws on.
"""

# %%
import numpy as np

from ragslo.corpus import contains_answer, parse_squad
from ragslo.desk import DeskCorpusConfig, desk_corpus_bytes
from ragslo.retriever import build_index, retrieve_topk, score_bm25

paragraphs, questions = parse_squad(desk_corpus_bytes(DeskCorpusConfig()))
index = build_index(paragraphs)
print(f"{index.num_docs} paragraphs, {len(index.vocabulary)} terms, avg length {index.avg_doc_length:.1f}")

# %%
# One answerable question and its top 5 paragraphs.
q = next(q for q in questions if q.answerable)
print(q.question, "->", q.gold_answers)
res = retrieve_topk(index, q.question, 5)
for doc, score in zip(res.doc_ids, res.scores):
    mark = "*" if contains_answer(paragraphs[doc].text, q.gold_answers) else " "
    print(f"  {mark} doc {doc:3d}  score {score:7.3f}")

# %%
# Scores are additive over query terms, so a single-term breakdown sums back up.
terms = q.question.lower().rstrip("?").split()
top = res.doc_ids[0]
parts = [score_bm25(index, [t], top) for t in terms]
print("per-term:", np.round(parts, 3), "sum", round(sum(parts), 6), "total", round(res.scores[0], 6))

# %%
# Smaller k is always a prefix of larger k, which is why one k=10 probe serves every action.
top10 = retrieve_topk(index, q.question, 10).doc_ids
print("k=2 ", res.doc_ids[:2], "\nk=10", top10)

# %%
# Hit@k over answerable questions.
answerable = [q for q in questions if q.answerable]
for k in (2, 5, 10):
    hits = [
        any(contains_answer(paragraphs[d].text, q.gold_answers) for d in retrieve_topk(index, q.question, k).doc_ids)
        for q in answerable
    ]
    print(f"hit@{k:<2d} {np.mean(hits):.3f}")
