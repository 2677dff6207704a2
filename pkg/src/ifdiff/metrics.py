"""MSE, MAE, PSNR and SSIM between layout grids.

Inputs live in [-1, 1] and are mapped to [0, 1] first, so the peak value is 1.
SSIM uses one global window per channel (grids are too small for sliding
windows) and averages over channels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidShapeError

C1 = (0.01 * 1.0) ** 2
C2 = (0.03 * 1.0) ** 2


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InvalidShapeError("metrics need non-empty inputs")
    return (a + 1.0) / 2.0, (b + 1.0) / 2.0


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr_from_mse(m: float) -> float:
    return math.inf if m == 0 else 10.0 * math.log10(1.0 / m)


def psnr(a, b) -> float:
    return psnr_from_mse(mse(a, b))


def ssim(a, b) -> float:
    """Global-window SSIM averaged over channels (leading axis of a 3-D grid)."""
    a, b = _pair(a, b)
    if a.ndim <= 2:
        a, b = a[None], b[None]
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    mu_a, mu_b = a.mean(axis=1), b.mean(axis=1)
    da, db = a - mu_a[:, None], b - mu_b[:, None]
    var_a, var_b = (da * da).mean(axis=1), (db * db).mean(axis=1)
    cov = (da * db).mean(axis=1)
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a ** 2 + mu_b ** 2 + C1) * (var_a + var_b + C2)
    return float(np.mean(num / den))


@dataclass
class MetricsRow:
    mse: float
    mae: float
    psnr: float
    ssim: float
    run_id: str = ""
    item: str = ""
    factor: float = 1.0
    seed: int = 0


def evaluate_pair(reference, generated, **tags) -> MetricsRow:
    m = mse(reference, generated)
    return MetricsRow(m, mae(reference, generated), psnr_from_mse(m), ssim(reference, generated), **tags)


def mean_row(rows, **tags) -> MetricsRow:
    cols = {k: float(np.mean([getattr(r, k) for r in rows])) for k in ("mse", "mae", "psnr", "ssim")}
    return MetricsRow(**cols, **tags)


METRICS_HEADER = ("mse", "mae", "psnr", "ssim", "run_id", "item", "factor", "seed")


def fmt(x: float) -> str:
    return "inf" if x == math.inf else repr(float(x))


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([fmt(r.mse), fmt(r.mae), fmt(r.psnr), fmt(r.ssim), r.run_id, r.item,
                        fmt(r.factor), r.seed])


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        rows = []
        for rec in csv.DictReader(fh):
            rows.append(MetricsRow(float(rec["mse"]), float(rec["mae"]), float(rec["psnr"]),
                                   float(rec["ssim"]), rec["run_id"], rec["item"],
                                   float(rec["factor"]), int(rec["seed"])))
        return rows
