"""Loss, metrics, Adam and the early-stopping training loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Parameter, Tensor
from .features import Batch
from .model import AuraModel

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class TrainConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    max_epochs: int = 100
    patience: int = 5
    batch_size: int = 32
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainConfigError("learning_rate must be positive")
        if self.patience < 1:
            raise TrainConfigError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise TrainConfigError("batch_size and max_epochs must be >= 1")


# ------------------------------------------------------------------- metrics

def _pair(pred, target):
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} vs target {target.shape}")
    return pred, target


def mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def mae(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred - target
    return (diff * diff).mean()


# ---------------------------------------------------------------------- Adam

@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: list[Parameter], **kw) -> "OptimizerState":
        return cls({p.name: np.zeros_like(p.data) for p in params},
                   {p.name: np.zeros_like(p.data) for p in params}, **kw)


def adam_step(params: list[Parameter], state: OptimizerState, lr: float) -> None:
    """Bias-corrected Adam update from ``p.grad``; gradients are zeroed afterwards."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter {p.name!r} at step {state.step + 1}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p in params:
        m, v, g = state.m[p.name], state.v[p.name], p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad[...] = 0.0


# ---------------------------------------------------------------- evaluation

def evaluate(model: AuraModel, batch: Batch) -> dict:
    """Mean over samples of per-sample MSE/MAE, on the normalised and raw scales."""
    if batch is None or len(batch) == 0:
        raise TrainConfigError("cannot evaluate an empty split")
    pred, _ = model.predict(batch)
    err = pred - batch.target
    raw_err = batch.denormalize(pred) - batch.raw_target()
    return {
        "mse": float(np.mean(np.mean(err ** 2, axis=1))),
        "mae": float(np.mean(np.mean(np.abs(err), axis=1))),
        "mse_raw": float(np.mean(np.mean(raw_err ** 2, axis=1))),
        "mae_raw": float(np.mean(np.mean(np.abs(raw_err), axis=1))),
        "n": len(batch),
    }


# ---------------------------------------------------------------------- loop

@dataclass
class TrainReport:
    seed: int
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")
    stop_epoch: int = 0
    early_stopped: bool = False
    n_steps: int = 0
    wall_time_s: float = 0.0
    created_utc: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        # volatile fields live under one key so artifacts compare equal without it
        d["timestamp"] = {"created_utc": d.pop("created_utc"), "wall_time_s": d.pop("wall_time_s")}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def train_loop(model: AuraModel, train: Batch, val: Batch, cfg: TrainConfig) -> TrainReport:
    """Minimise normalised MSE with Adam; early-stop on validation MSE and restore the best weights."""
    if train is None or len(train) == 0 or val is None or len(val) == 0:
        raise TrainConfigError("train and validation splits must be non-empty")
    if model.alpha_override is not None or model.moe_override is not None:
        raise TrainConfigError("gate overrides are test hooks and must be off during training")

    t_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = OptimizerState.init(params)
    model.zero_grad()
    report = TrainReport(seed=cfg.seed, created_utc=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    best_state = model.state_dict()
    since_best = 0
    n = len(train)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        seen = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            part = train.subset(idx)
            pred, _ = model.forward_batch(part)
            loss = mse_loss(pred, part.target)
            dc.backward(loss)
            adam_step(params, state, cfg.learning_rate)
            total += loss.item() * len(idx)
            seen += len(idx)
            report.n_steps += 1
            if cfg.max_steps is not None and report.n_steps >= cfg.max_steps:
                break
        report.train_losses.append(total / seen)
        val_loss = evaluate(model, val)["mse"]
        report.val_losses.append(val_loss)
        report.stop_epoch = epoch
        log.debug("epoch %d train %.6f val %.6f", epoch, report.train_losses[-1], val_loss)
        if val_loss < report.best_val:
            report.best_val, report.best_epoch = val_loss, epoch
            best_state = model.state_dict()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                report.early_stopped = True
                break
        if cfg.max_steps is not None and report.n_steps >= cfg.max_steps:
            break

    model.load_state_dict(best_state)
    report.wall_time_s = time.perf_counter() - t_start
    return report
