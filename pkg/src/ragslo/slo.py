"""SLO profiles and the per-(question, action) reward."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping

from .control import OutcomeFlags


class ProfileValidationError(ValueError):
    pass


@dataclass(frozen=True)
class SloProfile:
    """Reward weights for one service-level objective.

    ``cost_scale`` converts tokens into cost units. ``ref_correct`` and
    ``ref_incorrect`` scale the bonus for a correct refusal and the penalty for
    an incorrect one; both default to 1 (symmetric).
    """

    name: str
    w_acc: float
    w_cost: float
    w_hall: float
    w_ref: float
    cost_scale: float = 1000.0
    ref_correct: float = 1.0
    ref_incorrect: float = 1.0

    def __post_init__(self):
        for f in ("w_acc", "w_cost", "w_hall", "w_ref", "ref_correct", "ref_incorrect"):
            v = getattr(self, f)
            if not math.isfinite(v) or v < 0:
                raise ProfileValidationError(f"profile {self.name!r}: {f} must be finite and >= 0, got {v}")
        if not math.isfinite(self.cost_scale) or self.cost_scale <= 0:
            raise ProfileValidationError(f"profile {self.name!r}: cost_scale must be > 0")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


QUALITY_FIRST = SloProfile("quality_first", w_acc=1.0, w_cost=0.1, w_hall=1.0, w_ref=0.5)
CHEAP = SloProfile("cheap", w_acc=0.5, w_cost=1.0, w_hall=0.5, w_ref=0.5)


def compute_reward(flags: OutcomeFlags, profile: SloProfile) -> float:
    if flags.refusal_correct > 0:
        ref = profile.ref_correct
    elif flags.refusal_correct < 0:
        ref = -profile.ref_incorrect
    else:
        ref = 0.0
    return (
        profile.w_acc * flags.acc
        - profile.w_cost * (flags.cost_tokens / profile.cost_scale)
        - profile.w_hall * flags.hall
        + profile.w_ref * ref
    )


def profile_from_mapping(d: Mapping, base: SloProfile | None = None) -> SloProfile:
    """Build a profile from a config entry; keys missing from ``d`` come from ``base``."""
    known = {f.name for f in fields(SloProfile)}
    unknown = set(d) - known
    if unknown:
        raise ProfileValidationError(f"unknown SLO profile keys: {sorted(unknown)}")
    if base is not None:
        return replace(base, **{k: v for k, v in d.items()})
    try:
        return SloProfile(**d)
    except TypeError as exc:
        raise ProfileValidationError(str(exc)) from exc


def builtin_profiles(overrides: Iterable[Mapping] = ()) -> dict[str, SloProfile]:
    """The two built-in profiles, with config entries overriding or adding by name."""
    profiles = {p.name: p for p in (QUALITY_FIRST, CHEAP)}
    for entry in overrides:
        if "name" not in entry:
            raise ProfileValidationError("SLO profile entry needs a name")
        profiles[entry["name"]] = profile_from_mapping(entry, profiles.get(entry["name"]))
    return profiles
