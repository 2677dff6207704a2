"""Experiment commands: corpus generation, training, evaluation, sweep, sampling.

Each ``cmd_*`` function is what the CLI subcommand of the same name runs; they
are usable directly from Python and return the values they write to disk.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from . import denoiser, diffusion, layout, metrics
from .config import RunConfig
from .errors import IncompatibleError, InvalidConfigError
from .numerics import Rng
from .schedule import NoiseSchedule, scale_schedule
from .training import TrainConfig, kl_divergence, loss_total, make_batch, train, write_loss_csv

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ifdx"
LOSS_CSV_NAME = "loss.csv"
SWEEP_HEADER = ("factor", "psnr_mean", "psnr_std", "mse_mean", "ssim_mean")
PALETTE = [(240, 240, 240), (33, 102, 172), (214, 96, 77), (90, 174, 97),
           (153, 112, 171), (254, 224, 139), (64, 64, 64), (128, 205, 193)]


def corpus_from_config(cfg: RunConfig) -> list[layout.ViewHierarchy]:
    d = cfg.data
    if d.corpus_path:
        return layout.load_jsonl(d.corpus_path, d.K)
    return layout.synth_corpus(d.corpus_seed, d.corpus_size, d.H, d.W, d.K)


def eval_corpus_from_config(cfg: RunConfig) -> list[layout.ViewHierarchy]:
    """Held-out synthetic layouts drawn from a seed distinct from the training corpus."""
    d = cfg.data
    return layout.synth_corpus(cfg.eval.eval_seed + 1_000_003 * (d.corpus_seed + 1),
                               cfg.eval.eval_size, d.H, d.W, d.K)


def _load_corpus(corpus, K):
    if isinstance(corpus, (str, Path)):
        return layout.load_jsonl(corpus, K)
    return list(corpus)


def rasterize_corpus(corpus, H, W, K, context_dim=0):
    """Stacked grids ``(N, K, H, W)`` and their condition vectors ``(N, K + M)``."""
    grids = np.stack([layout.rasterize(vh, H, W, K) for vh in corpus])
    conds = np.stack([
        np.concatenate([layout.extract_condition(g).histogram, np.zeros(context_dim)]) for g in grids])
    return grids, conds


def cmd_gen_data(cfg: RunConfig, out_path) -> dict:
    d = cfg.data
    corpus = layout.synth_corpus(d.corpus_seed, d.corpus_size, d.H, d.W, d.K)
    layout.save_jsonl(corpus, out_path)
    grids, conds = rasterize_corpus(corpus, d.H, d.W, d.K)
    occ = conds.mean(axis=0)
    summary = {"n": len(corpus), "occupancy_mean": occ.tolist()}
    print(f"wrote {len(corpus)} layouts to {out_path}")
    print("mean class occupancy: " + ", ".join(f"{k}={v:.4f}" for k, v in enumerate(occ)))
    return summary


def validation_loss(params, grids, conds, sched, tcfg: TrainConfig) -> float:
    """Total loss on a fixed batch derived from the training seed."""
    batch = make_batch(grids, conds, sched, Rng(tcfg.seed).child(2), tcfg.batch_size)
    return loss_total(batch, params, tcfg.lam, tcfg.temperature, sched)[0].l_total


def cmd_train(cfg: RunConfig, out_dir, corpus=None):
    """Train and write ``model.ifdx`` plus ``loss.csv`` into ``out_dir``."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.data
    corpus = corpus_from_config(cfg) if corpus is None else _load_corpus(corpus, d.K)
    grids, conds = rasterize_corpus(corpus, d.H, d.W, d.K, d.context_dim)
    sched = cfg.make_schedule()
    params, history = train(cfg.training, grids, conds, sched, cfg.dims())
    write_loss_csv(history, out / LOSS_CSV_NAME)
    meta = {
        "config": cfg.to_dict(),
        "steps": len(history),
        "validation_loss": validation_loss(params, grids, conds, sched, cfg.training),
    }
    denoiser.save_checkpoint(params, sched, meta, out / CHECKPOINT_NAME)
    return params, history


def _check_compatible(params: denoiser.DenoiserParams, cfg: RunConfig):
    d, pd = cfg.data, params.dims
    if (d.K, d.H, d.W, d.context_dim) != (pd.K, pd.H, pd.W, pd.context_dim):
        raise IncompatibleError(
            f"checkpoint grid K={pd.K} H={pd.H} W={pd.W} M={pd.context_dim} does not match "
            f"config K={d.K} H={d.H} W={d.W} M={d.context_dim}")


def _resolve_model(checkpoint):
    if isinstance(checkpoint, (str, Path)):
        params, sched, _ = denoiser.load_checkpoint(checkpoint)
        return params, sched
    return checkpoint


def reconstruction_rows(model, grids, conds, sched: NoiseSchedule, t_star: int, seed: int,
                        variance="posterior", stochastic=True, run_id="", factor=1.0):
    recon = diffusion.reconstruct(model, grids, conds, sched, t_star, Rng(seed), variance, stochastic)
    return [metrics.evaluate_pair(g, r, run_id=run_id, item=str(i), factor=factor, seed=seed)
            for i, (g, r) in enumerate(zip(grids, recon))]


def _eval_inputs(checkpoint, corpus, cfg):
    params, sched = _resolve_model(checkpoint)
    _check_compatible(params, cfg)
    d = params.dims
    corpus = eval_corpus_from_config(cfg) if corpus is None else _load_corpus(corpus, d.K)
    if not corpus:
        raise IncompatibleError("evaluation corpus is empty")
    corpus = corpus[:cfg.eval.eval_size]
    grids, conds = rasterize_corpus(corpus, d.H, d.W, d.K, d.context_dim)
    return params, sched, grids, conds


def cmd_eval(checkpoint, corpus, cfg: RunConfig, out_path=None, model=None, stochastic=True):
    """Round-trip reconstruction metrics per held-out item plus a MEAN row.

    ``model`` overrides the checkpoint's network (e.g. with an oracle) while
    keeping its schedule and dims.
    """
    params, sched, grids, conds = _eval_inputs(checkpoint, corpus, cfg)
    t_star = cfg.t_star(sched.T)
    rows = reconstruction_rows(model or params, grids, conds, sched, t_star, cfg.eval.seed,
                               cfg.schedule.variance, stochastic, run_id="eval")
    rows.append(metrics.mean_row(rows, run_id="eval", item="MEAN", factor=1.0, seed=cfg.eval.seed))
    if out_path is not None:
        metrics.write_metrics_csv(rows, out_path)
    return rows


def cmd_sweep(checkpoint, corpus, cfg: RunConfig, out_path=None):
    """PSNR sensitivity to a multiplicative factor on the noise schedule."""
    factors = list(cfg.sweep.factors)
    if not factors:
        raise InvalidConfigError("sweep factor list is empty")
    params, sched, grids, conds = _eval_inputs(checkpoint, corpus, cfg)
    scaled = [scale_schedule(sched, f) for f in factors]  # fail fast on any bad factor
    t_star = cfg.t_star(sched.T)
    table = []
    for f, s in zip(factors, scaled):
        rows = reconstruction_rows(params, grids, conds, s, t_star, cfg.eval.seed,
                                   cfg.schedule.variance, run_id="sweep", factor=f)
        mean = metrics.mean_row(rows)
        psnrs = np.array([r.psnr for r in rows])
        table.append({"factor": float(f), "psnr_mean": mean.psnr, "psnr_std": float(np.std(psnrs)),
                      "mse_mean": mean.mse, "ssim_mean": mean.ssim})
        log.info("factor %g psnr %.3f dB", f, mean.psnr)
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_HEADER)
            for row in table:
                w.writerow([metrics.fmt(row[k]) for k in SWEEP_HEADER])
    return table


def parse_histogram(spec: str, K: int) -> np.ndarray:
    try:
        values = np.array([float(v) for v in spec.split(",")], dtype=np.float64)
    except ValueError:
        raise InvalidConfigError(f"condition spec {spec!r} is not a comma-separated list of numbers") from None
    if values.size != K:
        raise InvalidConfigError(f"condition spec has {values.size} entries, model has K={K} classes")
    if not np.all(np.isfinite(values)) or np.any(values < 0) or values.sum() <= 0:
        raise InvalidConfigError(f"condition spec {spec!r} cannot be normalized to a histogram")
    return values / values.sum()


def write_ppm(cells: np.ndarray, path, scale: int = 16) -> None:
    """Binary PPM with one flat color per class."""
    colors = np.array([PALETTE[k % len(PALETTE)] for k in range(int(cells.max()) + 1)], dtype=np.uint8)
    img = colors[cells].repeat(scale, axis=0).repeat(scale, axis=1)
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())


def generate(checkpoint, histogram, n: int, seed: int, variance="posterior"):
    """Sample ``n`` grids for one target histogram; returns ``(grids, cell maps)``."""
    params, sched = _resolve_model(checkpoint)
    cond = np.concatenate([histogram, np.zeros(params.dims.context_dim)])
    grids = diffusion.sample(params, cond, sched, Rng(seed), n, variance=variance)
    return grids, layout.decode(grids)


def cmd_sample(checkpoint, condition_spec: str, n: int, out_dir, seed: int = 0, variance="posterior"):
    params, sched = _resolve_model(checkpoint)
    hist = parse_histogram(condition_spec, params.dims.K)
    _, cells = generate((params, sched), hist, n, seed, variance)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "samples.jsonl", "w", encoding="utf-8") as fh:
        for i, c in enumerate(cells):
            rec = {"index": i, "condition": hist.tolist(),
                   "occupancy": layout.occupancy(c, params.dims.K).tolist(), "cells": c.tolist()}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
            write_ppm(c, out / f"sample_{i:03d}.ppm")
    return cells


def sample_condition_kl(params, sched, targets, n_per: int, seed: int, variance="posterior") -> float:
    """Mean over targets of KL(target || class occupancy pooled over its decoded samples)."""
    K = params.dims.K
    kls = []
    for j, p in enumerate(targets):
        _, cells = generate((params, sched), p, n_per, seed * 7919 + j, variance)
        occ = np.mean([layout.occupancy(c, K) for c in cells], axis=0)
        kls.append(float(kl_divergence(p, occ)))
    return float(np.mean(kls))


def psnr_is_finite(table) -> bool:
    return all(math.isfinite(r["psnr_mean"]) for r in table)
