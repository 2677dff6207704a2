"""Forward noising, reverse denoising and the ancestral sampler.

Step arguments follow the 1..T convention. ``t`` may be a scalar or one step
per batch item (leading axis). Noise is always passed in explicitly so each
kernel is a pure function.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import denoiser
from .errors import ContractViolation, InvalidConfigError
from .numerics import Rng
from .schedule import NoiseSchedule

X0_CLAMP = 3.0


def _coef(values, x):
    """Broadcast per-item coefficients against a batch ``x``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return values
    return values.reshape(values.shape + (1,) * (np.ndim(x) - values.ndim))


def forward_step(x_prev, t, sched: NoiseSchedule, eps) -> np.ndarray:
    """One draw from q(x_t | x_{t-1}) given the noise ``eps``."""
    beta = _coef(sched.beta[sched.index(t)], x_prev)
    return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * eps


def forward_jump(x0, t, sched: NoiseSchedule, eps) -> np.ndarray:
    """Closed-form draw from q(x_t | x_0)."""
    ab = _coef(sched.alpha_bar[sched.index(t)], x0)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_x0_raw(x_t, eps_hat, t, sched: NoiseSchedule) -> np.ndarray:
    ab = _coef(sched.alpha_bar[sched.index(t)], x_t)
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def predict_x0(x_t, eps_hat, t, sched: NoiseSchedule) -> np.ndarray:
    """Clean-state estimate implied by a noise prediction, clamped to [-3, 3]."""
    return np.clip(predict_x0_raw(x_t, eps_hat, t, sched), -X0_CLAMP, X0_CLAMP)


def reverse_mean(x_t, t, eps_hat, sched: NoiseSchedule) -> np.ndarray:
    i = sched.index(t)
    beta = _coef(sched.beta[i], x_t)
    ab = _coef(sched.alpha_bar[i], x_t)
    alpha = _coef(sched.alpha[i], x_t)
    return (x_t - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(alpha)


def reverse_mean_from_x0(x_t, t, x0_hat, sched: NoiseSchedule) -> np.ndarray:
    """Posterior mean of q(x_{t-1} | x_t, x_0) written in terms of x_0."""
    i = sched.index(t)
    beta = _coef(sched.beta[i], x_t)
    ab = _coef(sched.alpha_bar[i], x_t)
    alpha = _coef(sched.alpha[i], x_t)
    ab_prev = _coef(sched.alpha_bar_prev(t), x_t)
    return (np.sqrt(ab_prev) * beta / (1.0 - ab) * x0_hat
            + np.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab) * x_t)


def step_variance(t, sched: NoiseSchedule, variance: str = "posterior"):
    i = sched.index(t)
    if variance == "posterior":
        return sched.posterior_var[i]
    if variance == "beta":
        return sched.beta[i]
    raise InvalidConfigError(f"unknown variance choice {variance!r}")


def reverse_step(x_t, t, eps_hat, sched: NoiseSchedule, z, variance: str = "posterior") -> np.ndarray:
    """x_{t-1} = mu(x_t, eps_hat) + sigma_t z; ``z`` must be zero at t = 1."""
    t_arr = np.asarray(t)
    z = np.asarray(z, dtype=np.float64)
    z_final = z if t_arr.ndim == 0 else z[t_arr == 1]
    if np.any(t_arr == 1) and np.any(z_final != 0):
        raise ContractViolation("reverse_step at t=1 requires z = 0")
    sigma = _coef(np.sqrt(step_variance(t, sched, variance)), x_t)
    return reverse_mean(x_t, t, eps_hat, sched) + sigma * z


EpsFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def as_eps_fn(model) -> EpsFn:
    """Accept trained parameters or any callable ``(x_t, t, c) -> eps_hat``."""
    if isinstance(model, denoiser.DenoiserParams):
        return lambda x, t, c: denoiser.predict(model, x, t, c)
    if callable(model):
        return model
    raise TypeError(f"expected DenoiserParams or a callable, got {type(model).__name__}")


def _cond_batch(c, n):
    c = np.asarray(c.vector() if hasattr(c, "vector") else c, dtype=np.float64)
    if c.ndim == 1:
        c = np.tile(c, (n, 1))
    if c.shape[0] != n:
        raise InvalidConfigError(f"{c.shape[0]} conditions for a batch of {n}")
    return c


def run_chain(model, x, c, sched: NoiseSchedule, rng: Rng, t_start: int,
              variance: str = "posterior", stochastic: bool = True) -> np.ndarray:
    """Reverse chain from step ``t_start`` down to 1; clamps to [-1, 1] at the end only."""
    eps_fn = as_eps_fn(model)
    n = x.shape[0]
    c = _cond_batch(c, n)
    for t in range(t_start, 0, -1):
        t_vec = np.full(n, t, dtype=np.int64)
        eps_hat = eps_fn(x, t_vec, c)
        if t > 1 and stochastic:
            z = rng.normal(x.shape)
        else:
            z = np.zeros_like(x)
        x = reverse_step(x, t, eps_hat, sched, z, variance)
    return np.clip(x, -1.0, 1.0)


def sample(model, c, sched: NoiseSchedule, rng: Rng, n: int, grid_shape=None,
           variance: str = "posterior") -> np.ndarray:
    """Ancestral sampling of ``n`` grids; returns ``(n, K, H, W)``."""
    if n < 1:
        raise InvalidConfigError(f"sample count must be >= 1, got {n}")
    if grid_shape is None:
        if not isinstance(model, denoiser.DenoiserParams):
            raise InvalidConfigError("grid_shape is required for callable models")
        grid_shape = model.dims.grid_shape
    x = rng.normal((n,) + tuple(grid_shape))
    return run_chain(model, x, c, sched, rng, sched.T, variance)


def reconstruct(model, x0, c, sched: NoiseSchedule, t_star: int, rng: Rng,
                variance: str = "posterior", stochastic: bool = True) -> np.ndarray:
    """Noise a batch ``x0`` to step ``t_star`` and denoise it back."""
    sched.index(t_star)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = rng.normal(x0.shape)
    x = forward_jump(x0, t_star, sched, eps)
    return run_chain(model, x, c, sched, rng, int(t_star), variance, stochastic)


class OracleDenoiser:
    """Test hook that returns the true injected noise for a known x_0 batch.

    Valid only for chains that stay on the forward trajectory (e.g. a single
    reverse step from the jumped state).
    """

    def __init__(self, x0, sched: NoiseSchedule):
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.sched = sched

    def __call__(self, x_t, t, c):
        ab = _coef(self.sched.alpha_bar[self.sched.index(t)], x_t)
        return (x_t - np.sqrt(ab) * self.x0) / np.sqrt(1.0 - ab)
