import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aura import train as tr
from aura.context import HashingEmbedder
from aura.diffcore import DimensionError, Parameter
from aura.features import make_batch
from aura.model import AuraModel
from aura.synthetic import SyntheticConfig, generate_synthetic
from aura.data import dataset_windows
from aura.train import OptimizerState, TrainConfig, TrainConfigError, TrainingError, adam_step, mae, mse

from conftest import micro_config, random_batch


# ---------------------------------------------------------------- metrics

def test_perfect_prediction():
    assert (mse([1.0, 2.0], [1.0, 2.0]), mae([1.0, 2.0], [1.0, 2.0])) == (0.0, 0.0)


def test_symmetric_unit_errors():
    assert (mse([1.0, -1.0], [0.0, 0.0]), mae([1.0, -1.0], [0.0, 0.0])) == (1.0, 1.0)


def test_single_spike():
    assert (mse([3.0, 0.0, 0.0], [0.0] * 3), mae([3.0, 0.0, 0.0], [0.0] * 3)) == (3.0, 1.0)


def test_metric_length_mismatch():
    with pytest.raises(DimensionError):
        mse([1.0, 2.0], [1.0])


# ------------------------------------------------------------------- Adam

def test_zero_gradient_is_noop():
    p = Parameter(np.array([1.5, -2.0]), "p")
    state = OptimizerState.init([p])
    adam_step([p], state, 0.1)
    assert p.data.tolist() == [1.5, -2.0] and state.step == 1


def test_first_step_closed_form():
    lr, g = 1e-2, 0.37
    p = Parameter(np.array([2.0]), "p")
    p.grad[:] = g
    adam_step([p], OptimizerState.init([p]), lr)
    m_hat = 0.1 * g / (1 - 0.9)
    v_hat = 0.001 * g * g / (1 - 0.999)
    assert p.data[0] == pytest.approx(2.0 - lr * m_hat / (math.sqrt(v_hat) + 1e-8), abs=1e-15)
    assert p.grad[0] == 0.0


def test_two_steps_match_unrolled_recursion():
    lr, g = 5e-3, -1.3
    p = Parameter(np.array([0.5]), "p")
    state = OptimizerState.init([p])
    x, m, v = 0.5, 0.0, 0.0
    for t in (1, 2):
        p.grad[:] = g
        adam_step([p], state, lr)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= lr * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert p.data[0] == pytest.approx(x, abs=1e-15)
    assert state.m["p"].shape == p.data.shape


def test_nan_gradient_names_parameter():
    p, q = Parameter(np.zeros(2), "fine"), Parameter(np.zeros(2), "broken")
    q.grad[1] = np.nan
    with pytest.raises(TrainingError, match="broken"):
        adam_step([p, q], OptimizerState.init([p, q]), 0.1)
    assert p.data.tolist() == [0.0, 0.0]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=5), st.integers(1, 5))
def test_zero_gradient_after_history_is_still_noop_when_moments_zero(x, steps):
    p = Parameter(np.array(x), "p")
    state = OptimizerState.init([p])
    for _ in range(steps):
        adam_step([p], state, 1.0)
    assert p.data.tolist() == x


def test_config_validation():
    with pytest.raises(TrainConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(TrainConfigError):
        TrainConfig(patience=0)


# ------------------------------------------------------------- evaluation

class _Fixed:
    def __init__(self, pred):
        self.pred = pred

    def predict(self, batch, chunk=512):
        return self.pred, None


def test_evaluate_single_sample_equals_per_sample_metric():
    b = random_batch(micro_config(), B=1)
    pred = b.target + np.array([[1.0, -1.0, 0.0, 2.0]])
    out = tr.evaluate(_Fixed(pred), b)
    assert out["mse"] == pytest.approx(6.0 / 4) and out["mae"] == pytest.approx(1.0)


def test_evaluate_averages_sample_mses():
    b = random_batch(micro_config(), B=2)
    off = np.zeros((2, 4))
    off[0, 0] = math.sqrt(0.4)
    off[1, 0] = math.sqrt(1.2)
    assert tr.evaluate(_Fixed(b.target + off), b)["mse"] == pytest.approx(0.2, abs=1e-15)


def test_evaluate_matches_flat_residuals():
    b = random_batch(micro_config(), B=5, seed=4)
    pred = np.random.default_rng(0).normal(size=b.target.shape)
    out = tr.evaluate(_Fixed(pred), b)
    assert out["mse"] == pytest.approx(np.mean((pred - b.target).ravel() ** 2), rel=1e-12)
    assert out["mae"] == pytest.approx(np.mean(np.abs(pred - b.target).ravel()), rel=1e-12)


def test_evaluate_empty_split():
    b = random_batch(micro_config(), B=2)
    with pytest.raises(TrainConfigError):
        tr.evaluate(_Fixed(None), b.subset([]))


# ------------------------------------------------------------------- loop

def test_patience_one_stops_after_first_worse_epoch(monkeypatch):
    cfg = micro_config()
    model = AuraModel(cfg, seed=0)
    train, val = random_batch(cfg, B=6, seed=1), random_batch(cfg, B=3, seed=2)
    seen, snapshots = iter([1.0, 2.0, 3.0, 4.0]), []

    def fake_eval(m, batch):
        snapshots.append(m.state_dict())
        return {"mse": next(seen)}

    monkeypatch.setattr(tr, "evaluate", fake_eval)
    report = tr.train_loop(model, train, val, TrainConfig(max_epochs=10, patience=1, batch_size=4))
    assert (report.stop_epoch, report.best_epoch, report.early_stopped) == (2, 1, True)
    assert report.val_losses == [1.0, 2.0]
    final = model.state_dict()
    assert all(np.array_equal(final[k], snapshots[0][k]) for k in final)
    assert not all(np.array_equal(final[k], snapshots[1][k]) for k in final)


def test_best_weights_never_worse_than_observed():
    cfg = micro_config()
    model = AuraModel(cfg, seed=3)
    train, val = random_batch(cfg, B=16, seed=1), random_batch(cfg, B=4, seed=2)
    report = tr.train_loop(model, train, val, TrainConfig(learning_rate=5e-2, max_epochs=8, patience=2, batch_size=4))
    assert report.best_val == min(report.val_losses)
    assert tr.evaluate(model, val)["mse"] == pytest.approx(report.best_val, rel=1e-12)


def test_same_seed_same_trajectory():
    cfg = micro_config()
    train, val = random_batch(cfg, B=10, seed=1), random_batch(cfg, B=4, seed=2)
    runs = []
    for _ in range(2):
        model = AuraModel(cfg, seed=5)
        runs.append(tr.train_loop(model, train, val, TrainConfig(max_epochs=3, batch_size=4, seed=9)))
    np.testing.assert_allclose(runs[0].train_losses, runs[1].train_losses, rtol=0, atol=1e-12)
    np.testing.assert_allclose(runs[0].val_losses, runs[1].val_losses, rtol=0, atol=1e-12)


def test_empty_split_is_config_error():
    cfg = micro_config()
    b = random_batch(cfg, B=3)
    with pytest.raises(TrainConfigError):
        tr.train_loop(AuraModel(cfg), b.subset([]), b, TrainConfig())


def test_max_steps_caps_updates():
    cfg = micro_config()
    b = random_batch(cfg, B=10)
    report = tr.train_loop(AuraModel(cfg), b, b, TrainConfig(max_epochs=50, batch_size=2, max_steps=7))
    assert report.n_steps == 7


def test_report_json_keeps_volatile_fields_apart():
    d = tr.TrainReport(seed=1, created_utc="x", wall_time_s=2.0).to_dict()
    assert set(d["timestamp"]) == {"created_utc", "wall_time_s"} and "created_utc" not in d


# ---------------------------------------------------------- scale property

_SAMPLES = dataset_windows(generate_synthetic(SyntheticConfig(n_series=12, series_len=10, seed=2)), 6, 4, 10)


@settings(max_examples=6, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_scaling_raw_endo_leaves_loss_trajectory_unchanged(c):
    cfg = micro_config()
    emb = HashingEmbedder(dim=cfg.text_embed_dim)
    scaled = [replace(s, endo_hist=c * s.endo_hist, endo_target=c * s.endo_target) for s in _SAMPLES]
    losses = []
    for samples in (_SAMPLES, scaled):
        b = make_batch(samples, None, emb)
        model = AuraModel(cfg, seed=0)
        losses.append(tr.train_loop(model, b, b, TrainConfig(max_epochs=3, batch_size=4)).train_losses)
    np.testing.assert_allclose(losses[0], losses[1], rtol=0, atol=1e-9)
