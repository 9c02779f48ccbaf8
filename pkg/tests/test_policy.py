import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragslo.policy import (
    DimensionMismatchError,
    PolicyModel,
    TrainConfig,
    TrainingError,
    ce_loss_and_grad,
    example_weights,
    fit,
    forward_softmax,
    label_best_action,
    predict_action,
    train_policy,
)
from ragslo.slo import CHEAP, QUALITY_FIRST


def numeric_grad(model, X, y, w, l2, h=1e-6):
    gw = np.zeros_like(model.weights)
    gb = np.zeros_like(model.bias)
    for arr, g in ((model.weights, gw), (model.bias, gb)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + h
            up = ce_loss_and_grad(model, X, y, w, l2)[0]
            arr[i] = old - h
            down = ce_loss_and_grad(model, X, y, w, l2)[0]
            arr[i] = old
            g[i] = (up - down) / (2 * h)
    return gw, gb


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def separable(n=500, d=12, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 3, size=(5, d))
    y = rng.integers(0, 5, size=n)
    X = centers[y] + rng.normal(0, 0.5, size=(n, d))
    return X, y


@pytest.mark.parametrize(
    "rewards, expected",
    [
        ([0.2, 0.5, 0.1, 0.0, 0.4], (1, 0.1)),
        ([1.0, 1.0, 0.0, 0.0, 0.0], (0, 0.0)),
        ([0.0, 0.0, 0.0, 0.0, 0.3], (4, 0.3)),
        ([-1.0, -2.0, -0.5, -3.0, -0.5], (2, 0.0)),
    ],
)
def test_label_best_action(rewards, expected):
    best, margin = label_best_action(rewards)
    assert best == expected[0]
    assert margin == pytest.approx(expected[1], abs=1e-12)


def test_label_rejects_bad_input():
    with pytest.raises(ValueError):
        label_best_action([0, 1, 2])
    with pytest.raises(ValueError):
        label_best_action([0, 1, 2, 3, float("nan")])


def test_softmax_examples():
    m = PolicyModel.zeros(3)
    np.testing.assert_allclose(forward_softmax(m, np.ones(3)), np.full(5, 0.2))
    m.bias[:] = [10, 0, 0, 0, 0]
    assert forward_softmax(m, np.zeros(3))[0] > 0.99
    assert predict_action(m, np.zeros(3)) == 0


def test_softmax_stable_for_large_logits():
    m = PolicyModel.zeros(1)
    m.weights[:, 0] = [1000, 999, 0, 0, 0]
    p = forward_softmax(m, np.array([1.0]))
    assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1.0)


def test_predict_ties_go_to_lowest_id():
    m = PolicyModel.zeros(2)
    m.bias[:] = [0, 1, 1, 0, 1]
    assert predict_action(m, np.zeros(2)) == 1
    assert predict_action(m, np.zeros((3, 2))).tolist() == [1, 1, 1]


def test_zero_model_loss_is_log5():
    X = np.random.default_rng(0).normal(size=(7, 4))
    loss, _, _ = ce_loss_and_grad(PolicyModel.zeros(4), X, np.arange(7) % 5, np.ones(7))
    assert loss == pytest.approx(math.log(5), abs=1e-12)


@pytest.mark.parametrize("objective", ["ce", "ce-wt"])
@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(objective, seed):
    rng = np.random.default_rng(seed)
    d, n = 6, 9
    m = PolicyModel(rng.normal(size=(5, d)), rng.normal(size=5))
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 5, size=n)
    w = example_weights(rng.uniform(0, 1, size=n), objective)
    _, gw, gb = ce_loss_and_grad(m, X, y, w, 1e-3)
    nw, nb = numeric_grad(m, X, y, w, 1e-3)
    assert rel_err(gw, nw) < 1e-4 and rel_err(gb, nb) < 1e-4


def test_example_weights():
    np.testing.assert_array_equal(example_weights([0.1, 0.3], "ce"), [1, 1])
    np.testing.assert_allclose(example_weights([0.1, 0.3], "ce-wt"), [0.5, 1.5])
    np.testing.assert_array_equal(example_weights([0.0, 0.0], "ce-wt"), [1, 1])


def test_ce_wt_equals_ce_for_equal_margins():
    X, y = separable(60, 5)
    cfg = dict(epochs=30)
    a = fit(X, y, np.full(60, 0.7), TrainConfig(objective="ce", **cfg))
    b = fit(X, y, np.full(60, 0.7), TrainConfig(objective="ce-wt", **cfg))
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)
    np.testing.assert_allclose(a.loss_trace, b.loss_trace, atol=1e-12)


def test_separable_recovery():
    X, y = separable()
    model = fit(X, y, None, TrainConfig())
    assert np.mean(predict_action(model, X) == y) >= 0.95


def test_zero_epochs_is_uniform():
    X, y = separable(20, 4)
    model = fit(X, y, None, TrainConfig(epochs=0))
    np.testing.assert_allclose(forward_softmax(model, X), 0.2)
    assert model.loss_trace == []


def test_small_step_loss_decreases_monotonically():
    X, y = separable(100, 6, seed=4)
    trace = fit(X, y, None, TrainConfig(learning_rate=1e-3, epochs=50)).loss_trace
    assert all(b < a for a, b in zip(trace, trace[1:]))


def test_training_is_deterministic_and_serialization_exact(tmp_path):
    X, y = separable(80, 5)
    a = fit(X, y, None, TrainConfig(epochs=20))
    b = fit(X, y, None, TrainConfig(epochs=20))
    assert a.to_json() == b.to_json()
    path = tmp_path / "m.json"
    a.save(path)
    c = PolicyModel.load(path)
    np.testing.assert_array_equal(c.weights, a.weights)
    np.testing.assert_array_equal(c.bias, a.bias)
    assert c.to_json() == a.to_json()


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        predict_action(PolicyModel.zeros(3), np.zeros(4))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    X = np.array([[1e200, -1e200], [-1e200, 1e200]])
    with pytest.raises(TrainingError):
        fit(X, np.array([0, 1]), None, TrainConfig(learning_rate=1e10, epochs=5))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(objective="hinge")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    assert TrainConfig(objective="CE-WT").objective == "ce-wt"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=5, max_size=5))
def test_label_is_an_argmax(rewards):
    best, margin = label_best_action(rewards)
    assert rewards[best] == max(rewards) and margin >= 0
    assert all(rewards[i] < rewards[best] for i in range(best))


def test_train_policy_on_log(desk_log):
    _, ds = desk_log
    for profile in (QUALITY_FIRST, CHEAP):
        model = train_policy(ds, profile, TrainConfig(epochs=50))
        assert model.slo == profile.name
        assert model.metadata["n_train"] == len(ds)
        assert sum(model.metadata["label_counts"]) == len(ds)
        assert model.loss_trace[-1] < model.loss_trace[0]
