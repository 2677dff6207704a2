"""Noise schedules and the per-step coefficients derived from them.

Arrays are stored 0-based; every public accessor takes the step ``t`` in the
1..T convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidStepError

DEFAULT_T = 200
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.05
DEFAULT_COSINE_S = 0.008
COSINE_BETA_CLIP = (1e-6, 0.999)


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray

    @classmethod
    def from_betas(cls, beta) -> "NoiseSchedule":
        beta = np.asarray(beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 2:
            raise InvalidConfigError("a schedule needs at least 2 steps")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise InvalidConfigError("every beta must lie in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = np.empty_like(alpha)
        acc = 1.0
        for i, a in enumerate(alpha):
            acc = acc * a
            alpha_bar[i] = acc
        if alpha_bar[-1] <= 0.0:
            raise InvalidConfigError("alpha_bar underflowed to zero")
        post = np.empty_like(beta)
        post[0] = beta[0]
        post[1:] = beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:])
        return cls(_readonly(beta), _readonly(alpha), _readonly(alpha_bar), _readonly(post))

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def __eq__(self, other):
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return np.array_equal(self.beta, other.beta)

    def index(self, t):
        """0-based index for step(s) ``t`` in 1..T; raises on anything else."""
        arr = np.asarray(t)
        if arr.dtype.kind not in "iu":
            if not np.all(np.mod(arr, 1) == 0):
                raise InvalidStepError(f"step must be an integer, got {t!r}")
            arr = arr.astype(np.int64)
        if np.any(arr < 1) or np.any(arr > self.T):
            raise InvalidStepError(f"step {t!r} outside 1..{self.T}")
        return arr - 1

    def alpha_bar_prev(self, t):
        """ᾱ_{t-1}, with ᾱ_0 = 1."""
        i = self.index(t)
        padded = np.concatenate([[1.0], self.alpha_bar])
        return padded[i]

    def check(self):
        """Assert every structural invariant; returns self for chaining."""
        b, ab = self.beta, self.alpha_bar
        assert np.all((b > 0) & (b < 1))
        assert np.all(np.diff(ab) < 0) and 0 < ab[-1] < ab[0] < 1
        assert ab[0] == self.alpha[0]
        assert np.all(ab[1:] == ab[:-1] * self.alpha[1:])
        assert np.all(self.posterior_var <= b)
        return self


def linear_schedule(T: int = DEFAULT_T, beta_min: float = DEFAULT_BETA_MIN,
                    beta_max: float = DEFAULT_BETA_MAX) -> NoiseSchedule:
    if int(T) != T or T < 2:
        raise InvalidConfigError(f"T must be an integer >= 2, got {T!r}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise InvalidConfigError(
            f"need 0 < beta_min <= beta_max < 1, got {beta_min!r}, {beta_max!r}")
    T = int(T)
    steps = np.arange(T, dtype=np.float64)
    beta = beta_min + steps / (T - 1) * (beta_max - beta_min)
    return NoiseSchedule.from_betas(beta)


def cosine_alpha_bar(u, T: int, s: float):
    """Unclipped ᾱ(u) = f(u)/f(0) for the cosine family, u in [0, T]."""
    def f(v):
        return np.cos(((np.asarray(v, dtype=np.float64) / T) + s) / (1.0 + s) * math.pi / 2) ** 2
    return f(u) / f(0.0)


def cosine_schedule(T: int = DEFAULT_T, s: float = DEFAULT_COSINE_S) -> NoiseSchedule:
    if int(T) != T or T < 2:
        raise InvalidConfigError(f"T must be an integer >= 2, got {T!r}")
    if not (s > 0 and math.isfinite(s)):
        raise InvalidConfigError(f"cosine offset s must be > 0, got {s!r}")
    T = int(T)
    ab = cosine_alpha_bar(np.arange(T + 1), T, s)
    beta = np.clip(1.0 - ab[1:] / ab[:-1], *COSINE_BETA_CLIP)
    return NoiseSchedule.from_betas(beta)


def scale_schedule(sched: NoiseSchedule, factor: float) -> NoiseSchedule:
    if not (factor > 0 and math.isfinite(factor)):
        raise InvalidConfigError(f"scale factor must be > 0, got {factor!r}")
    beta = sched.beta * float(factor)
    if np.any(beta >= 1.0):
        raise InvalidConfigError(
            f"factor {factor!r} pushes beta to {beta.max():.4g} (must stay < 1)")
    return NoiseSchedule.from_betas(beta)


def make_schedule(family: str, T: int, beta_min: float = DEFAULT_BETA_MIN,
                  beta_max: float = DEFAULT_BETA_MAX, s: float = DEFAULT_COSINE_S) -> NoiseSchedule:
    if family == "linear":
        return linear_schedule(T, beta_min, beta_max)
    if family == "cosine":
        return cosine_schedule(T, s)
    raise InvalidConfigError(f"unknown schedule family {family!r}")
