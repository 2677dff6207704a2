"""Independent oracles shared by the test modules."""

import numpy as np

from ifdiff import denoiser, training
from ifdiff.denoiser import Dims
from ifdiff.layout import one_hot
from ifdiff.numerics import Rng
from ifdiff.schedule import linear_schedule


def central_difference(f, arrays, step=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. each array in ``arrays`` (mutated in place)."""
    grads = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f()
            flat[i] = orig - step
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def rel_error(analytic, numeric, floor=1e-6):
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def tiny_problem(seed, lam=0.1, temperature=0.5):
    """Random tiny config: D <= 16, hidden <= 8, with a matching training batch."""
    r = np.random.default_rng(seed)
    K, H, W = [(2, 2, 2), (3, 2, 2), (2, 2, 4), (4, 2, 2)][seed % 4]
    T = int(r.integers(5, 20))
    dims = Dims(K, H, W, T, hidden=int(r.integers(3, 9)), layers=int(r.integers(1, 4)),
                time_dim=2 * int(r.integers(1, 4)))
    sched = linear_schedule(T, 1e-3, float(r.uniform(0.05, 0.3)))
    params = denoiser.init(seed, dims)
    # random biases so every parameter's gradient path is exercised
    for k, v in params.arrays.items():
        if k.endswith("_b"):
            v[...] = r.normal(0, 0.3, v.shape)
    B = int(r.integers(2, 5))
    cells = r.integers(0, K, (B, H, W))
    grids = np.stack([one_hot(c, K) for c in cells])
    conds = np.stack([(np.bincount(c.ravel(), minlength=K) / c.size) for c in cells])
    batch = training.make_batch(grids, conds, sched, Rng(seed), B)
    return dims, sched, params, batch, lam, temperature


ACCEPTANCE = []


def report(criterion, ok, detail):
    """Record one acceptance line; printed in the terminal summary."""
    ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")
    return ok
