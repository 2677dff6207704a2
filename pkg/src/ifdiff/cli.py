"""Command-line entry point: ``ifdiff {gen-data,train,eval,sweep,sample}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import functools
import logging
import sys

import click

from . import config as config_mod
from . import harness
from .errors import CheckpointError, InvalidConfigError, InvalidDataError, NumericFailure

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _exit_on_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InvalidConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (InvalidDataError, CheckpointError) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except NumericFailure as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            for key, value in exc.state.items():
                click.echo(f"  {key}: {value}", err=True)
            sys.exit(EXIT_NUMERIC)
    return wrapper


def _load_config(path, seed):
    cfg = config_mod.load(path) if path else config_mod.RunConfig().validate()
    if seed is not None:
        cfg.training.seed = seed
        cfg.eval.seed = seed
    return cfg


config_opt = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                          help="JSON run config (defaults are used when omitted).")
seed_opt = click.option("--seed", type=int, default=None, help="Override the config's seeds.")
checkpoint_opt = click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
corpus_opt = click.option("--corpus", type=click.Path(dir_okay=False), default=None,
                          help="JSONL corpus (eval/sweep default to a held-out synthetic set).")


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Conditional diffusion over rasterized UI layouts."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("default-config")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def default_config(out):
    """Print (or write) the default configuration."""
    text = config_mod.dumps(config_mod.RunConfig())
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.command("gen-data")
@config_opt
@seed_opt
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_exit_on_error
def gen_data(config_path, seed, out):
    """Write a synthetic layout corpus as JSONL."""
    cfg = _load_config(config_path, None)
    if seed is not None:
        cfg.data.corpus_seed = seed
    harness.cmd_gen_data(cfg, out)


@main.command()
@config_opt
@seed_opt
@corpus_opt
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="Directory for model.ifdx and loss.csv.")
@_exit_on_error
def train(config_path, seed, corpus, out):
    """Train the denoiser."""
    cfg = _load_config(config_path, seed)
    _, history = harness.cmd_train(cfg, out, corpus)
    if history:
        click.echo(f"trained {len(history)} steps; final l_simple={history[-1].l_simple:.5f}")
    click.echo(f"checkpoint: {out}/{harness.CHECKPOINT_NAME}")


@main.command("eval")
@config_opt
@seed_opt
@checkpoint_opt
@corpus_opt
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_exit_on_error
def eval_cmd(config_path, seed, checkpoint, corpus, out):
    """Reconstruction metrics (MSE, MAE, PSNR, SSIM) on held-out layouts."""
    cfg = _load_config(config_path, seed)
    rows = harness.cmd_eval(checkpoint, corpus, cfg, out)
    m = rows[-1]
    click.echo(f"MEAN mse={m.mse:.5f} mae={m.mae:.5f} psnr={m.psnr:.3f} ssim={m.ssim:.4f}")


@main.command()
@config_opt
@seed_opt
@checkpoint_opt
@corpus_opt
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_exit_on_error
def sweep(config_path, seed, checkpoint, corpus, out):
    """PSNR under multiplicative rescaling of the noise schedule."""
    cfg = _load_config(config_path, seed)
    for row in harness.cmd_sweep(checkpoint, corpus, cfg, out):
        click.echo(f"factor={row['factor']:g} psnr={row['psnr_mean']:.3f}±{row['psnr_std']:.3f}")


@main.command()
@config_opt
@seed_opt
@checkpoint_opt
@click.option("--condition", required=True, help="Target class histogram, e.g. '0.6,0.2,0.2'.")
@click.option("-n", "n", type=int, default=None, help="Number of samples.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@_exit_on_error
def sample(config_path, seed, checkpoint, condition, n, out):
    """Generate layouts for a target class histogram."""
    cfg = _load_config(config_path, seed)
    n = cfg.eval.sample_n if n is None else n
    if n < 1:
        raise InvalidConfigError("-n must be >= 1")
    harness.cmd_sample(checkpoint, condition, n, out, cfg.eval.seed, cfg.schedule.variance)
    click.echo(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
