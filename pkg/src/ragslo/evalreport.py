"""Replay evaluation, fixed-action baselines and report tables."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .control import ACTIONS, N_ACTIONS
from .logstore import LogDataset, LogIntegrityError
from .policy import DimensionMismatchError, PolicyModel, label_best_action, predict_action
from .slo import SloProfile, compute_reward


@dataclass
class MetricsReport:
    accuracy: float
    avg_cost_tokens: float
    avg_reward: float
    refusal_rate: float
    hallucination_rate: float
    retrieval_hit_rate: float
    action_distribution: list[float]
    n_questions: int
    hit_rate_defined: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(**d)


def evaluate_actions(chosen: Sequence[int], dataset: LogDataset, profile: SloProfile) -> MetricsReport:
    """Aggregate logged outcomes of one chosen action per question."""
    n = len(dataset)
    if len(chosen) != n:
        raise ValueError("need exactly one action per question")
    if n == 0:
        raise ValueError("cannot evaluate on an empty set")
    acc = cost = reward = refusal = hall = 0.0
    hits = hit_den = 0
    counts = np.zeros(N_ACTIONS)
    for q, a in zip(dataset.qids, chosen):
        a = int(a)
        recs = dataset.records[q]
        if not 0 <= a < min(N_ACTIONS, len(recs)) or recs[a].action != a:
            raise LogIntegrityError(f"qid {q!r}: no logged record for action {a}", q)
        rec = recs[a]
        f = rec.flags
        acc += f.acc
        cost += f.cost_tokens
        reward += compute_reward(f, profile)
        refusal += f.refusal
        hall += f.hall
        counts[a] += 1
        if rec.answerable and ACTIONS[a].retrieval_k > 0:
            hit_den += 1
            hits += f.hit or 0
    return MetricsReport(
        accuracy=acc / n,
        avg_cost_tokens=cost / n,
        avg_reward=reward / n,
        refusal_rate=refusal / n,
        hallucination_rate=hall / n,
        retrieval_hit_rate=hits / hit_den if hit_den else 0.0,
        action_distribution=(counts / n).tolist(),
        n_questions=n,
        hit_rate_defined=hit_den > 0,
    )


def evaluate_policy_replay(model: PolicyModel, eval_set: LogDataset, profile: SloProfile) -> MetricsReport:
    if model.feature_dim != eval_set.feature_dim:
        raise DimensionMismatchError(
            f"model expects {model.feature_dim} features, log header declares {eval_set.feature_dim}"
        )
    chosen = predict_action(model, eval_set.feature_matrix()) if len(eval_set) else []
    return evaluate_actions(list(np.atleast_1d(chosen)), eval_set, profile)


def evaluate_fixed(action_id: int, eval_set: LogDataset, profile: SloProfile) -> MetricsReport:
    return evaluate_actions([action_id] * len(eval_set), eval_set, profile)


def oracle_actions(eval_set: LogDataset, profile: SloProfile) -> list[int]:
    """Per-question best action under ``profile`` (the training label)."""
    return [label_best_action(r)[0] for r in eval_set.reward_matrix(profile)]


def evaluate_oracle(eval_set: LogDataset, profile: SloProfile) -> MetricsReport:
    return evaluate_actions(oracle_actions(eval_set, profile), eval_set, profile)


def best_fixed_action(eval_set: LogDataset, profile: SloProfile) -> tuple[int, MetricsReport]:
    if len(eval_set) == 0:
        raise ValueError("cannot pick a best fixed action on an empty set")
    reports = [evaluate_fixed(a.id, eval_set, profile) for a in ACTIONS]
    best = int(np.argmax([r.avg_reward for r in reports]))
    return best, reports[best]


# --- report emission -------------------------------------------------------

TABLE_COLUMNS = (
    "SLO",
    "Method",
    "Acc",
    "Cost",
    "Reward",
    "Refuse",
    "Hit",
    "BestFixed Acc",
    "BestFixed Cost",
    "BestFixed Reward",
)
# 3 decimals for accuracy and rates, 4 for everything else
_PRECISION = {
    "Acc": 3,
    "Refuse": 3,
    "Hit": 3,
    "BestFixed Acc": 3,
    "Cost": 4,
    "Reward": 4,
    "BestFixed Cost": 4,
    "BestFixed Reward": 4,
}


@dataclass
class ReportRow:
    slo: str
    method: str
    metrics: MetricsReport
    best_fixed_action: int
    best_fixed: MetricsReport
    provenance: dict = field(default_factory=dict)

    def table_values(self) -> dict:
        m, b = self.metrics, self.best_fixed
        return {
            "SLO": self.slo,
            "Method": self.method,
            "Acc": m.accuracy,
            "Cost": m.avg_cost_tokens,
            "Reward": m.avg_reward,
            "Refuse": m.refusal_rate,
            "Hit": m.retrieval_hit_rate,
            "BestFixed Acc": b.accuracy,
            "BestFixed Cost": b.avg_cost_tokens,
            "BestFixed Reward": b.avg_reward,
        }

    def to_dict(self) -> dict:
        return {
            "slo": self.slo,
            "method": self.method,
            "metrics": self.metrics.to_dict(),
            "best_fixed_action": self.best_fixed_action,
            "best_fixed": self.best_fixed.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReportRow":
        return cls(
            slo=d["slo"],
            method=d["method"],
            metrics=MetricsReport.from_dict(d["metrics"]),
            best_fixed_action=int(d["best_fixed_action"]),
            best_fixed=MetricsReport.from_dict(d["best_fixed"]),
            provenance=dict(d.get("provenance", {})),
        )


def _fmt(col: str, value) -> str:
    if col in _PRECISION:
        return f"{value:.{_PRECISION[col]}f}"
    return str(value)


def format_rows(rows: Sequence[ReportRow]) -> list[list[str]]:
    return [[_fmt(c, r.table_values()[c]) for c in TABLE_COLUMNS] for r in rows]


def metrics_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    w.writerows(format_rows(rows))
    return buf.getvalue()


def parse_metrics_csv(text: str) -> list[dict]:
    """Read a metrics table back; numeric columns become floats."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append({k: (float(v) if k in _PRECISION else v) for k, v in row.items()})
    return out


def metrics_text(rows: Sequence[ReportRow]) -> str:
    cells = [list(TABLE_COLUMNS)] + format_rows(rows)
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for j, r in enumerate(cells):
        parts = [r[i].ljust(widths[i]) if i < 2 else r[i].rjust(widths[i]) for i in range(len(r))]
        lines.append("  ".join(parts).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_report(rows: Sequence[ReportRow], out_dir) -> dict[str, Path]:
    """Write the metrics table and the three plot-data files under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "metrics.csv": metrics_csv(rows),
        "metrics.txt": metrics_text(rows),
        "fig1_action_dist.csv": _csv_text(
            ["SLO", "Method"] + [f"a{a.id}" for a in ACTIONS],
            [[r.slo, r.method] + [f"{p:.4f}" for p in r.metrics.action_distribution] for r in rows],
        ),
        "fig2_cost_accuracy.csv": _csv_text(
            ["SLO", "Method", "Kind", "Cost", "Acc"],
            [
                row
                for r in rows
                for row in (
                    [r.slo, r.method, "policy", f"{r.metrics.avg_cost_tokens:.4f}", f"{r.metrics.accuracy:.3f}"],
                    [
                        r.slo,
                        r.method,
                        f"best_fixed_a{r.best_fixed_action}",
                        f"{r.best_fixed.avg_cost_tokens:.4f}",
                        f"{r.best_fixed.accuracy:.3f}",
                    ],
                )
            ],
        ),
        "fig3_reward.csv": _csv_text(
            ["SLO", "Method", "Reward", "BestFixed Action", "BestFixed Reward"],
            [
                [r.slo, r.method, f"{r.metrics.avg_reward:.4f}", r.best_fixed_action, f"{r.best_fixed.avg_reward:.4f}"]
                for r in rows
            ],
        ),
    }
    paths = {}
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths[name] = p
    return paths
