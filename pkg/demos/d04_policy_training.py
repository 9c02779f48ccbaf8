"""
Learning a router from a replay log
===================================

Sweep a sample of questions, label each with its best action under an SLO,
and fit a linear softmax router on hashed question features.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from ragslo.corpus import parse_squad
from ragslo.desk import DeskCorpusConfig, desk_corpus_bytes
from ragslo.evalreport import best_fixed_action, evaluate_oracle, evaluate_policy_replay
from ragslo.generation import SimulatedBackend
from ragslo.logstore import read_log, run_sweep, split_log
from ragslo.policy import TrainConfig, train_policy
from ragslo.retriever import build_index
from ragslo.slo import CHEAP, QUALITY_FIRST

paragraphs, questions = parse_squad(desk_corpus_bytes(DeskCorpusConfig()))
index = build_index(paragraphs)
work = Path(tempfile.mkdtemp())
summary = run_sweep(questions, index, paragraphs, SimulatedBackend(), 200, 0, work / "sweep.jsonl")
print(summary.to_dict())

# %%
ds = read_log(work / "sweep.jsonl")
train, ev = split_log(ds, 0.5, seed=0)
print(f"train {len(train)}  eval {len(ev)}  features {ds.feature_dim}")

# %%
for profile in (QUALITY_FIRST, CHEAP):
    bf, bf_report = best_fixed_action(ev, profile)
    print(f"\n{profile.name}: best fixed a{bf} reward {bf_report.avg_reward:.4f}")
    print(f"  oracle reward {evaluate_oracle(ev, profile).avg_reward:.4f}")
    for objective in ("ce", "ce-wt"):
        model = train_policy(train, profile, TrainConfig(objective=objective))
        m = evaluate_policy_replay(model, ev, profile)
        print(
            f"  {objective:<5} loss {model.loss_trace[0]:.3f} -> {model.loss_trace[-1]:.3f}"
            f"  reward {m.avg_reward:.4f}  acc {m.accuracy:.3f}  dist {np.round(m.action_distribution, 2)}"
        )
