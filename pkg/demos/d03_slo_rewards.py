"""
SLO profiles as reward weights
==============================

A service-level objective is a weight vector over accuracy, token cost,
hallucination and refusal. The same outcome earns different rewards under
different profiles.
"""

# %%
from ragslo.control import OutcomeFlags
from ragslo.slo import CHEAP, QUALITY_FIRST, SloProfile, builtin_profiles, compute_reward

outcomes = {
    "correct, 244 tokens": OutcomeFlags(1, 244, 0, 0, 0),
    "hallucination, 300 tokens": OutcomeFlags(0, 300, 1, 0, 0),
    "justified refusal, 11 tokens": OutcomeFlags(0, 11, 0, 1, 1),
    "needless refusal, 4 tokens": OutcomeFlags(0, 4, 0, 1, -1),
}
for name, f in outcomes.items():
    print(f"{name:<30} quality_first {compute_reward(f, QUALITY_FIRST):+.4f}   cheap {compute_reward(f, CHEAP):+.4f}")

# %%
# Profiles can be overridden or added by name, for example from a run config.
profiles = builtin_profiles([{"name": "cheap", "w_ref": 0.2}, {"name": "strict", "w_acc": 1, "w_cost": 0.05, "w_hall": 5, "w_ref": 0.5}])
for p in profiles.values():
    print(p.to_dict())

# %%
# Refusals can be rewarded asymmetrically.
asym = SloProfile("asym", 1, 0.1, 1, 1, ref_incorrect=3)
print(compute_reward(outcomes["needless refusal, 4 tokens"], asym))
