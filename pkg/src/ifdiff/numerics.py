"""Float64 tensor helpers and the seeded random source.

Tensors are plain ``numpy.ndarray`` objects with dtype float64. The helpers
here add the shape checks and fixed reduction order the rest of the package
relies on; hot loops elsewhere use numpy directly.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidShapeError

DTYPE = np.float64


def check_shape(shape) -> tuple[int, ...]:
    try:
        dims = tuple(int(d) for d in shape)
    except TypeError:
        dims = (int(shape),)
    if not dims or any(d < 1 for d in dims):
        raise InvalidShapeError(f"all dimensions must be >= 1, got {shape!r}")
    return dims


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


def _same_shape(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise InvalidShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def add(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a + b


def sub(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a - b


def mul(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a * b


def scale(a, factor: float) -> np.ndarray:
    return as_tensor(a) * float(factor)


def tensor_sum(a) -> float:
    """Sum in flat (row-major) index order, one element at a time."""
    flat = as_tensor(a).ravel()
    if flat.size == 0:
        raise InvalidShapeError("cannot reduce an empty tensor")
    # accumulate is strictly sequential, unlike the pairwise np.sum
    return float(np.add.accumulate(flat)[-1])


def tensor_mean(a) -> float:
    flat = as_tensor(a).ravel()
    return tensor_sum(flat) / flat.size


def box_muller(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map uniforms u1 in (0, 1] and u2 in [0, 1) to two standard normals."""
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return r * np.cos(theta), r * np.sin(theta)


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for an independent stream, a pure function of (seed, keys)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class Rng:
    """Deterministic random stream seeded from a 64-bit integer.

    Uniform bits come from PCG64; normals are produced by Box-Muller so the
    number of uniforms consumed per draw is fixed.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self):
        return f"Rng(seed={self.seed})"

    def child(self, *keys: int) -> "Rng":
        return Rng(derive_seed(self.seed, *keys))

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        dims = check_shape(shape)
        return low + (high - low) * self._gen.random(dims)

    def integers(self, low: int, high: int, size: int) -> np.ndarray:
        """Integers in [low, high)."""
        return self._gen.integers(low, high, size=int(size))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, shape) -> np.ndarray:
        dims = check_shape(shape)
        n = int(np.prod(dims))
        pairs = (n + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)
        u2 = self._gen.random(pairs)
        z1, z2 = box_muller(u1, u2)
        out = np.empty(2 * pairs, dtype=DTYPE)
        out[0::2] = z1
        out[1::2] = z2
        return out[:n].reshape(dims)


def normal(rng: Rng, shape) -> np.ndarray:
    return rng.normal(shape)
