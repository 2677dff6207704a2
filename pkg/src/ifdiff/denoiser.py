"""Noise-prediction network eps(x_t, t, c) with an exact backward pass.

Architecture: flatten x_t, project to ``hidden``, add projections of the
condition vector and a sinusoidal time embedding, SiLU, then ``layers - 1``
hidden blocks (linear + SiLU) and a linear read-out back to the input size.
"""

from __future__ import annotations

import itertools
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (CheckpointError, ContractViolation, InvalidConfigError,
                     InvalidShapeError, InvalidStepError, VersionMismatchError)
from .numerics import Rng
from .schedule import NoiseSchedule

_tokens = itertools.count(1)


@dataclass(frozen=True)
class Dims:
    K: int
    H: int
    W: int
    steps: int
    hidden: int = 256
    layers: int = 3
    time_dim: int = 32
    context_dim: int = 0

    def __post_init__(self):
        for name in ("K", "H", "W", "steps", "hidden", "layers", "time_dim"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfigError(f"{name} must be >= 1, got {getattr(self, name)!r}")
        if self.context_dim < 0:
            raise InvalidConfigError("context_dim must be >= 0")
        if self.time_dim % 2:
            raise InvalidConfigError(f"time_dim must be even, got {self.time_dim}")

    @property
    def input_dim(self) -> int:
        return self.K * self.H * self.W

    @property
    def cond_dim(self) -> int:
        return self.K + self.context_dim

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return (self.K, self.H, self.W)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter names and shapes in declaration (serialization) order."""
        h = self.hidden
        shapes = {
            "in_w": (self.input_dim, h),
            "in_b": (h,),
            "cond_w": (self.cond_dim, h),
            "time_w": (self.time_dim, h),
        }
        for i in range(1, self.layers):
            shapes[f"hid{i}_w"] = (h, h)
            shapes[f"hid{i}_b"] = (h,)
        shapes["out_w"] = (h, self.input_dim)
        shapes["out_b"] = (self.input_dim,)
        return shapes


@dataclass(eq=False)
class DenoiserParams:
    dims: Dims
    arrays: dict[str, np.ndarray]
    token: int = field(default_factory=lambda: next(_tokens), compare=False)

    def __post_init__(self):
        shapes = self.dims.param_shapes()
        if list(self.arrays) != list(shapes):
            raise InvalidConfigError(f"parameter names {list(self.arrays)} do not match {list(shapes)}")
        for name, shape in shapes.items():
            a = self.arrays[name]
            if a.shape != shape:
                raise InvalidShapeError(f"{name}: expected {shape}, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise InvalidConfigError(f"{name}: non-finite parameter values")

    def __getitem__(self, name):
        return self.arrays[name]

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def replace(self, arrays) -> "DenoiserParams":
        return DenoiserParams(self.dims, dict(arrays))

    def equal(self, other) -> bool:
        return self.dims == other.dims and all(
            np.array_equal(a, other.arrays[k]) for k, a in self.arrays.items())

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())


def zeros(dims: Dims) -> DenoiserParams:
    return DenoiserParams(dims, {k: np.zeros(s) for k, s in dims.param_shapes().items()})


def init(seed: int, dims: Dims) -> DenoiserParams:
    """Xavier-uniform weights, zero biases."""
    rng = Rng(seed)
    arrays = {}
    for name, shape in dims.param_shapes().items():
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(shape, -bound, bound)
    return DenoiserParams(dims, arrays)


def time_embedding(t, T: int, d_t: int) -> np.ndarray:
    """Sinusoidal features (sin(w_j t), cos(w_j t)) with w_j = 10000^(-2j/d_t).

    ``t`` may be a scalar or an array of steps in 1..T; output gets a trailing
    axis of size ``d_t``.
    """
    if d_t % 2 or d_t < 2:
        raise InvalidConfigError(f"time embedding dim must be even and >= 2, got {d_t}")
    t_arr = np.asarray(t)
    if np.any(t_arr < 1) or np.any(t_arr > T):
        raise InvalidStepError(f"step {t!r} outside 1..{T}")
    j = np.arange(d_t // 2)
    omega = (1.0 / 10000.0) ** (2.0 * j / d_t)
    phase = t_arr.astype(np.float64)[..., None] * omega
    out = np.empty(phase.shape[:-1] + (d_t,))
    out[..., 0::2] = np.sin(phase)
    out[..., 1::2] = np.cos(phase)
    return out


def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass
class ForwardCache:
    token: int
    in_shape: tuple[int, ...]
    x: np.ndarray
    cond: np.ndarray
    temb: np.ndarray
    pre: list = field(default_factory=list)   # pre-activations per hidden layer
    act: list = field(default_factory=list)   # SiLU outputs per hidden layer


def forward(params: DenoiserParams, x_t, t, c) -> tuple[np.ndarray, ForwardCache]:
    """Predict the injected noise for a batch.

    ``x_t``: ``(B, K, H, W)`` (or ``(B, D)``); ``t``: ``(B,)`` ints in 1..steps;
    ``c``: ``(B, K + context_dim)`` condition vectors.
    """
    dims = params.dims
    x_t = np.asarray(x_t, dtype=np.float64)
    B = x_t.shape[0] if x_t.ndim >= 1 else 0
    x = x_t.reshape(B, -1) if B else x_t
    if B == 0 or x.shape[1] != dims.input_dim:
        raise InvalidShapeError(f"x_t shape {x_t.shape} incompatible with input dim {dims.input_dim}")
    t = np.broadcast_to(np.asarray(t), (B,)) if np.ndim(t) == 0 else np.asarray(t)
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1:
        c = np.broadcast_to(c, (B, c.size))
    if t.shape != (B,) or c.shape != (B, dims.cond_dim):
        raise InvalidShapeError(
            f"batch mismatch: x_t {x_t.shape}, t {t.shape}, c {c.shape} (cond dim {dims.cond_dim})")
    temb = time_embedding(t, dims.steps, dims.time_dim)
    p = params.arrays
    cache = ForwardCache(params.token, x_t.shape, x, c, temb)
    z = x @ p["in_w"] + p["in_b"] + c @ p["cond_w"] + temb @ p["time_w"]
    a = silu(z)
    cache.pre.append(z)
    cache.act.append(a)
    for i in range(1, dims.layers):
        z = a @ p[f"hid{i}_w"] + p[f"hid{i}_b"]
        a = silu(z)
        cache.pre.append(z)
        cache.act.append(a)
    out = a @ p["out_w"] + p["out_b"]
    return out.reshape(x_t.shape), cache


def predict(params: DenoiserParams, x_t, t, c) -> np.ndarray:
    return forward(params, x_t, t, c)[0]


def backward(params: DenoiserParams, cache: ForwardCache, d_eps) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradient w.r.t. the network output.

    Returns one array per parameter plus ``"x"``, the gradient w.r.t. ``x_t``.
    """
    if cache.token != params.token:
        raise ContractViolation("forward cache belongs to a different parameter set")
    d_eps = np.asarray(d_eps, dtype=np.float64)
    if d_eps.shape != cache.in_shape:
        raise ContractViolation(f"d_eps shape {d_eps.shape} does not match forward output {cache.in_shape}")
    dims, p = params.dims, params.arrays
    B = cache.x.shape[0]
    d_out = d_eps.reshape(B, -1)
    grads = {}
    grads["out_w"] = cache.act[-1].T @ d_out
    grads["out_b"] = d_out.sum(axis=0)
    da = d_out @ p["out_w"].T
    for i in range(dims.layers - 1, 0, -1):
        dz = da * silu_grad(cache.pre[i])
        grads[f"hid{i}_w"] = cache.act[i - 1].T @ dz
        grads[f"hid{i}_b"] = dz.sum(axis=0)
        da = dz @ p[f"hid{i}_w"].T
    dz = da * silu_grad(cache.pre[0])
    grads["in_w"] = cache.x.T @ dz
    grads["in_b"] = dz.sum(axis=0)
    grads["cond_w"] = cache.cond.T @ dz
    grads["time_w"] = cache.temb.T @ dz
    ordered = {k: grads[k] for k in dims.param_shapes()}
    ordered["x"] = (dz @ p["in_w"].T).reshape(cache.in_shape)
    return ordered


# --- checkpoint file -------------------------------------------------------

MAGIC = b"IFDX1"
FORMAT_VERSION = 1
_DIMS_FMT = "<8I"


def _encode(params: DenoiserParams, sched: NoiseSchedule, meta: dict) -> bytes:
    d = params.dims
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    parts.append(struct.pack(_DIMS_FMT, d.K, d.H, d.W, d.steps, d.hidden, d.layers,
                             d.time_dim, d.context_dim))
    parts.append(struct.pack("<I", sched.T))
    parts.append(sched.beta.astype("<f8").tobytes())
    meta_bytes = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode()
    parts.append(struct.pack("<I", len(meta_bytes)))
    parts.append(meta_bytes)
    for a in params.arrays.values():
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(params: DenoiserParams, sched: NoiseSchedule, meta: dict | None, path) -> None:
    Path(path).write_bytes(_encode(params, sched, meta or {}))


def load_checkpoint(path) -> tuple[DenoiserParams, NoiseSchedule, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not an IFDX checkpoint")
    (version,) = struct.unpack_from("<I", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{path}: checksum mismatch (file truncated or corrupt)")
    try:
        off = len(MAGIC) + 4
        fields = struct.unpack_from(_DIMS_FMT, body, off)
        off += struct.calcsize(_DIMS_FMT)
        dims = Dims(*fields)
        (T,) = struct.unpack_from("<I", body, off)
        off += 4
        beta = np.frombuffer(body, "<f8", T, off).astype(np.float64)
        off += 8 * T
        (mlen,) = struct.unpack_from("<I", body, off)
        off += 4
        meta = json.loads(body[off:off + mlen].decode())
        off += mlen
        arrays = {}
        for name, shape in dims.param_shapes().items():
            n = int(np.prod(shape))
            arrays[name] = np.frombuffer(body, "<f8", n, off).astype(np.float64).reshape(shape)
            off += 8 * n
        if off != len(body):
            raise CheckpointError(f"{path}: {len(body) - off} trailing bytes")
        sched = NoiseSchedule.from_betas(beta)
        params = DenoiserParams(dims, arrays)
    except CheckpointError:
        raise
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from None
    return params, sched, meta
