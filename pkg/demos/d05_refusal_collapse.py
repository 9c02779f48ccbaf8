"""
Refusal collapse under a cost-driven SLO
========================================

With half the questions unanswerable and weak retrieval, a profile that
values refusal as much as accuracy teaches the router to refuse almost
everything. The quality-first profile on the same log does not collapse.
"""

# %%
import tempfile
from pathlib import Path

from ragslo.corpus import parse_squad
from ragslo.desk import COLLAPSE_CONFIG, desk_corpus_bytes
from ragslo.evalreport import evaluate_fixed, evaluate_policy_replay
from ragslo.generation import SimulatedBackend
from ragslo.logstore import read_log, run_sweep, split_log
from ragslo.policy import TrainConfig, train_policy
from ragslo.retriever import build_index
from ragslo.slo import CHEAP, QUALITY_FIRST

paragraphs, questions = parse_squad(desk_corpus_bytes(COLLAPSE_CONFIG))
index = build_index(paragraphs)
path = Path(tempfile.mkdtemp()) / "sweep.jsonl"
run_sweep(questions, index, paragraphs, SimulatedBackend(), len(questions), 0, path)
train, ev = split_log(read_log(path), 0.5, seed=0)
print(f"{len(questions)} questions, {sum(not q.answerable for q in questions)} unanswerable")

# %%
for profile in (CHEAP, QUALITY_FIRST):
    m = evaluate_policy_replay(train_policy(train, profile, TrainConfig()), ev, profile)
    a4 = evaluate_fixed(4, ev, profile)
    print(
        f"{profile.name:<14} refuse {m.refusal_rate:.3f}  acc {m.accuracy:.3f}"
        f"  reward {m.avg_reward:.4f}  (always refuse: {a4.avg_reward:.4f})"
    )
