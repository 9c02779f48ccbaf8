"""Linear softmax router trained to imitate the per-question best action."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import N_ACTIONS

MODEL_SCHEMA_VERSION = 1
OBJECTIVES = ("ce", "ce-wt")


class TrainingError(RuntimeError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0
    objective: str = "ce"

    def __post_init__(self):
        self.objective = self.objective.lower()
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


@dataclass
class PolicyModel:
    weights: np.ndarray  # (N_ACTIONS, feature_dim)
    bias: np.ndarray  # (N_ACTIONS,)
    objective: str = "ce"
    slo: str = ""
    seed: int = 0
    loss_trace: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[0] != N_ACTIONS:
            raise ValueError(f"weights must have shape ({N_ACTIONS}, d)")
        if self.bias.shape != (N_ACTIONS,):
            raise ValueError(f"bias must have shape ({N_ACTIONS},)")

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, feature_dim: int, **kw) -> "PolicyModel":
        return cls(np.zeros((N_ACTIONS, feature_dim)), np.zeros(N_ACTIONS), **kw)

    def to_json(self) -> str:
        payload = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "feature_dim": self.feature_dim,
            "objective": self.objective,
            "slo": self.slo,
            "seed": self.seed,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "loss_trace": [float(x) for x in self.loss_trace],
            "metadata": self.metadata,
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PolicyModel":
        d = json.loads(text)
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema {d.get('schema_version')!r}")
        model = cls(
            weights=np.array(d["weights"], dtype=float).reshape(N_ACTIONS, d["feature_dim"]),
            bias=np.array(d["bias"], dtype=float),
            objective=d["objective"],
            slo=d["slo"],
            seed=d["seed"],
            loss_trace=list(d["loss_trace"]),
            metadata=d.get("metadata", {}),
        )
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PolicyModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def label_best_action(rewards: Sequence[float]) -> tuple[int, float]:
    """Best action (lowest id wins ties) and its margin over the runner-up."""
    r = np.asarray(rewards, dtype=float)
    if r.shape != (N_ACTIONS,) or not np.all(np.isfinite(r)):
        raise ValueError(f"expected {N_ACTIONS} finite rewards")
    best = int(np.argmax(r))  # argmax returns the first maximum
    second = np.max(np.delete(r, best))
    return best, float(r[best] - second)


def _check_dim(model: PolicyModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.feature_dim:
        raise DimensionMismatchError(f"features have dimension {x.shape[-1]}, model expects {model.feature_dim}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_softmax(model: PolicyModel, features: np.ndarray) -> np.ndarray:
    """Action probabilities for one feature vector (or a batch of row vectors)."""
    x = np.asarray(features, dtype=float)
    _check_dim(model, x)
    return _softmax(x @ model.weights.T + model.bias)


def predict_action(model: PolicyModel, features: np.ndarray):
    """Greedy action; lowest id on ties. Returns an int, or an int array for a batch."""
    p = forward_softmax(model, features)
    a = np.argmax(p, axis=-1)
    return int(a) if np.ndim(a) == 0 else a.astype(int)


def example_weights(margins: np.ndarray, objective: str) -> np.ndarray:
    """Per-example loss weights: all ones for CE, margins rescaled to mean 1 for CE-WT."""
    margins = np.asarray(margins, dtype=float)
    if objective == "ce":
        return np.ones_like(margins)
    if objective != "ce-wt":
        raise ValueError(f"unknown objective {objective!r}")
    mean = margins.mean() if margins.size else 0.0
    if mean <= 0:
        return np.ones_like(margins)
    return margins / mean


def ce_loss_and_grad(
    model: PolicyModel, X: np.ndarray, y: np.ndarray, w: np.ndarray, l2: float = 0.0
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted cross-entropy with an L2 penalty on the weight matrix.

    Returns ``(loss, grad_weights, grad_bias)``. The data term is normalized by
    the total example weight.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    w = np.asarray(w, dtype=float)
    _check_dim(model, X)
    if np.any(w < 0):
        raise ValueError("example weights must be >= 0")
    if np.any((y < 0) | (y >= N_ACTIONS)):
        raise ValueError("labels must lie in 0..4")
    total = w.sum()
    if total <= 0:
        raise ValueError("example weights sum to zero")
    logits = X @ model.weights.T + model.bias
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_p = z[np.arange(len(y)), y] - log_norm
    loss = float(-(w * log_p).sum() / total + 0.5 * l2 * np.sum(model.weights**2))

    p = np.exp(z - log_norm[:, None])
    d_logits = p
    d_logits[np.arange(len(y)), y] -= 1.0
    d_logits *= (w / total)[:, None]
    grad_w = d_logits.T @ X + l2 * model.weights
    grad_b = d_logits.sum(axis=0)
    return loss, grad_w, grad_b


def labels_and_margins(reward_matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pairs = [label_best_action(r) for r in reward_matrix]
    return np.array([p[0] for p in pairs], dtype=int), np.array([p[1] for p in pairs], dtype=float)


def fit(
    X: np.ndarray,
    y: np.ndarray,
    margins: Optional[np.ndarray],
    config: TrainConfig,
    slo: str = "",
) -> PolicyModel:
    """Full-batch gradient descent from a zero initialization."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training set is empty")
    if margins is None:
        margins = np.ones(len(y))
    w = example_weights(margins, config.objective)
    model = PolicyModel.zeros(X.shape[1], objective=config.objective, slo=slo, seed=config.seed)
    for epoch in range(config.epochs):
        loss, gw, gb = ce_loss_and_grad(model, X, y, w, config.l2)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        model.loss_trace.append(loss)
        model.weights -= config.learning_rate * gw
        model.bias -= config.learning_rate * gb
        if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))):
            raise TrainingError(f"non-finite parameters after epoch {epoch}")
    return model


def train_policy(train_set, profile, config: TrainConfig = TrainConfig()) -> PolicyModel:
    """Label each logged question with its best action under ``profile`` and fit the router."""
    X = train_set.feature_matrix()
    if len(X) == 0:
        raise ValueError("training set is empty")
    y, margins = labels_and_margins(train_set.reward_matrix(profile))
    model = fit(X, y, margins, config, slo=profile.name)
    model.metadata = {
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "l2": config.l2,
        "n_train": int(len(y)),
        "label_counts": np.bincount(y, minlength=N_ACTIONS).tolist(),
    }
    return model
