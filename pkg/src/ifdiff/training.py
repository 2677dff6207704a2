"""Training objective, Adam and the training loop.

The objective is the noise-prediction MSE plus ``lam`` times a KL penalty
between each item's target class-occupancy histogram and the soft occupancy
of the clean grid implied by the network's noise prediction.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import denoiser
from .diffusion import _coef, forward_jump, predict_x0_raw
from .errors import InvalidConfigError, InvalidDataError, InvalidShapeError, NumericFailure
from .layout import soft_histogram, soft_histogram_backward
from .numerics import Rng
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

KL_FLOOR = 1e-12


class TrainingTriple(NamedTuple):
    x_t: np.ndarray
    t: int
    eps: np.ndarray
    c: np.ndarray
    x0: np.ndarray


@dataclass
class TrainingBatch:
    """Stacked training examples; ``batch[i]`` gives one ``TrainingTriple``."""

    x_t: np.ndarray    # (B, K, H, W)
    t: np.ndarray      # (B,) steps in 1..T
    eps: np.ndarray    # (B, K, H, W) noise actually injected
    cond: np.ndarray   # (B, K + M) condition vectors
    x0: np.ndarray     # (B, K, H, W) clean grids

    def __len__(self):
        return self.t.shape[0]

    def __getitem__(self, i) -> TrainingTriple:
        return TrainingTriple(self.x_t[i], int(self.t[i]), self.eps[i], self.cond[i], self.x0[i])


def make_batch(grids, conditions, sched: NoiseSchedule, rng: Rng, batch_size: int) -> TrainingBatch:
    """Sample x_0 with replacement, t uniform on 1..T and fresh Gaussian noise."""
    grids = np.asarray(grids, dtype=np.float64)
    conditions = np.asarray(conditions, dtype=np.float64)
    if grids.ndim != 4 or grids.shape[0] == 0:
        raise InvalidConfigError("training corpus is empty")
    if conditions.shape[0] != grids.shape[0]:
        raise InvalidConfigError("one condition vector per corpus grid is required")
    if batch_size < 1:
        raise InvalidConfigError(f"batch size must be >= 1, got {batch_size}")
    idx = rng.integers(0, grids.shape[0], batch_size)
    t = rng.integers(1, sched.T + 1, batch_size)
    x0 = grids[idx]
    eps = rng.normal(x0.shape)
    return TrainingBatch(forward_jump(x0, t, sched, eps), t, eps, conditions[idx], x0)


def loss_simple(eps_true, eps_hat) -> float:
    eps_true = np.asarray(eps_true, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps_true.shape != eps_hat.shape:
        raise InvalidShapeError(f"shape mismatch: {eps_true.shape} vs {eps_hat.shape}")
    return float(np.mean((eps_true - eps_hat) ** 2))


def kl_divergence(p, q) -> np.ndarray:
    """KL(p || q) along the last axis; q floored at 1e-12, 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.maximum(np.asarray(q, dtype=np.float64), KL_FLOOR)
    safe_p = np.where(p > 0, p, 1.0)
    return np.sum(np.where(p > 0, p * np.log(safe_p / q), 0.0), axis=-1)


def _check_targets(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
        raise InvalidDataError("condition histograms must lie on the simplex")
    return p


def loss_reg(x_hat0, targets, temperature: float) -> float:
    """Batch mean of KL(target histogram || soft occupancy of x_hat0)."""
    p = _check_targets(targets)
    q = soft_histogram(x_hat0, temperature)
    return float(np.mean(kl_divergence(p, q)))


@dataclass
class LossBreakdown:
    l_simple: float
    l_reg: float
    l_total: float
    lam: float


def loss_total(batch: TrainingBatch, params: denoiser.DenoiserParams, lam: float,
               temperature: float, sched: NoiseSchedule):
    """Combined loss and its exact gradients w.r.t. every parameter."""
    if not lam >= 0:
        raise InvalidConfigError(f"lambda must be >= 0, got {lam!r}")
    K = params.dims.K
    eps_hat, cache = denoiser.forward(params, batch.x_t, batch.t, batch.cond)
    diff = eps_hat - batch.eps
    l_simple = float(np.mean(diff ** 2))
    d_eps = 2.0 * diff / diff.size

    targets = _check_targets(batch.cond[:, :K])
    x0_hat = predict_x0_raw(batch.x_t, eps_hat, batch.t, sched)
    q = soft_histogram(x0_hat, temperature)
    B = len(batch)
    l_reg = float(np.mean(kl_divergence(targets, q)))
    if lam != 0:
        # d/dq of mean_b sum_k p log(p/q); zero where the floor is active
        d_q = np.where((targets > 0) & (q > KL_FLOOR), -targets / np.maximum(q, KL_FLOOR), 0.0) / B
        d_x0 = soft_histogram_backward(x0_hat, temperature, d_q)
        ab = _coef(sched.alpha_bar[sched.index(batch.t)], x0_hat)
        d_eps = d_eps + lam * (-np.sqrt(1.0 - ab) / np.sqrt(ab)) * d_x0
    grads = denoiser.backward(params, cache, d_eps)
    grads.pop("x")
    breakdown = LossBreakdown(l_simple, l_reg, l_simple + lam * l_reg, lam)
    return breakdown, grads


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: denoiser.DenoiserParams, grads: dict, state: OptimizerState):
    """One bias-corrected Adam update; returns new params and state."""
    for name, p in params.arrays.items():
        if name not in grads or np.shape(grads[name]) != p.shape:
            raise InvalidShapeError(f"gradient for {name} missing or mis-shaped")
    step = state.step + 1
    bc1 = 1.0 - state.beta1 ** step
    bc2 = 1.0 - state.beta2 ** step
    new_arrays, m_new, v_new = {}, {}, {}
    for name, p in params.arrays.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_arrays[name] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        m_new[name], v_new[name] = m, v
    new_state = OptimizerState(state.lr, state.beta1, state.beta2, state.eps, step, m_new, v_new)
    return params.replace(new_arrays), new_state


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    lr: float = 1e-3
    lam: float = 0.1
    temperature: float = 0.5
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str | None = None
    dump_path: str | None = None


def train(config: TrainConfig, grids, conditions, sched: NoiseSchedule, dims: denoiser.Dims,
          params: denoiser.DenoiserParams | None = None):
    """Run the training loop; returns ``(params, history)``.

    ``history`` is a list of ``LossBreakdown``, one per step. Everything is a
    pure function of ``config.seed`` and the inputs.
    """
    if config.steps < 0 or config.batch_size < 1:
        raise InvalidConfigError("steps must be >= 0 and batch_size >= 1")
    if params is None:
        params = denoiser.init(config.seed, dims)
    batch_rng = Rng(config.seed).child(1)
    state = OptimizerState(lr=config.lr)
    history = []
    for step in range(1, config.steps + 1):
        batch = make_batch(grids, conditions, sched, batch_rng, config.batch_size)
        losses, grads = loss_total(batch, params, config.lam, config.temperature, sched)
        if not all(math.isfinite(v) for v in (losses.l_simple, losses.l_reg, losses.l_total)):
            dump = {"step": step, "l_simple": losses.l_simple, "l_reg": losses.l_reg,
                    "l_total": losses.l_total,
                    "param_max_abs": {k: float(np.max(np.abs(a))) for k, a in params.arrays.items()}}
            if config.dump_path:
                Path(config.dump_path).write_text(json.dumps(dump, indent=2))
            raise NumericFailure(f"non-finite loss at step {step}", dump)
        params, state = adam_step(params, grads, state)
        history.append(losses)
        if config.checkpoint_every and config.checkpoint_path and step % config.checkpoint_every == 0:
            denoiser.save_checkpoint(params, sched, {"step": step}, config.checkpoint_path)
        if step % 500 == 0:
            log.info("step %d l_simple=%.5f l_reg=%.5f", step, losses.l_simple, losses.l_reg)
    return params, history


LOSS_HEADER = ("step", "l_simple", "l_reg", "l_total")


def write_loss_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_HEADER)
        for i, row in enumerate(history, start=1):
            w.writerow([i, repr(row.l_simple), repr(row.l_reg), repr(row.l_total)])
