"""Run configuration (JSON file), validated before any work starts."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .features import FeatureConfig
from .generation import HttpConfig
from .policy import TrainConfig
from .slo import SloProfile, builtin_profiles


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BackendSection(_Strict):
    kind: Literal["sim", "http"] = "sim"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4.1-nano"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_tokens: int = Field(64, gt=0)
    max_attempts: int = Field(3, ge=1)
    backoff_base: float = Field(1.0, ge=0)
    timeout: float = Field(30.0, gt=0)
    max_in_flight: int = Field(4, ge=1)

    def http_config(self) -> HttpConfig:
        return HttpConfig(**self.model_dump(exclude={"kind"}))


class FeatureSection(_Strict):
    dim: int = Field(256, gt=0)
    char_scale: float = Field(100.0, gt=0)
    token_scale: float = Field(20.0, gt=0)
    score_scale: float = Field(10.0, gt=0)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(**self.model_dump())


class SloSection(_Strict):
    name: str
    w_acc: Optional[float] = Field(None, ge=0)
    w_cost: Optional[float] = Field(None, ge=0)
    w_hall: Optional[float] = Field(None, ge=0)
    w_ref: Optional[float] = Field(None, ge=0)
    cost_scale: Optional[float] = Field(None, gt=0)
    ref_correct: Optional[float] = Field(None, ge=0)
    ref_incorrect: Optional[float] = Field(None, ge=0)


class TrainSection(_Strict):
    learning_rate: float = Field(0.1, gt=0)
    epochs: int = Field(200, ge=0)
    l2: float = Field(1e-4, ge=0)
    seed: int = 0


class SweepSection(_Strict):
    n: int = Field(200, ge=0)
    seed: int = 0
    max_failure_fraction: float = Field(0.1, ge=0, le=1)


class SplitSection(_Strict):
    eval_fraction: Optional[float] = Field(None, gt=0, lt=1)
    seed: int = 0


class RunConfig(_Strict):
    corpus: str
    out_dir: str = "runs/default"
    backend: BackendSection = BackendSection()
    features: FeatureSection = FeatureSection()
    slo: list[SloSection] = []
    train: TrainSection = TrainSection()
    sweep: SweepSection = SweepSection()
    split: SplitSection = SplitSection()

    @field_validator("slo")
    @classmethod
    def _unique_names(cls, v):
        names = [s.name for s in v]
        if len(names) != len(set(names)):
            raise ValueError("duplicate SLO profile names")
        return v

    def profiles(self) -> dict[str, SloProfile]:
        entries = [{k: val for k, val in s.model_dump().items() if val is not None} for s in self.slo]
        return builtin_profiles(entries)

    def train_config(self, objective: str) -> TrainConfig:
        return TrainConfig(objective=objective, **self.train.model_dump())

    def config_hash(self) -> str:
        """Hash of the settings that shape results; paths are excluded (the corpus is hashed by content)."""
        canon = json.dumps(self.model_dump(mode="json", exclude={"corpus", "out_dir"}), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def load_config(path) -> RunConfig:
    """Read and validate a JSON run config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{path}: {loc}: {first['msg']}") from None
    base = path.parent
    updates = {}
    for key in ("corpus", "out_dir"):
        p = Path(getattr(cfg, key))
        if not p.is_absolute():
            updates[key] = str(base / p)
    return cfg.model_copy(update=updates)
