import numpy as np
import pytest

from ifdiff import config, denoiser, harness


@pytest.fixture(scope="session")
def toy_config():
    return config.RunConfig().validate()


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory, toy_config):
    """Default toy model (256 layouts, T=200, 2000 steps), trained once per session."""
    out = tmp_path_factory.mktemp("toy_run")
    params, history = harness.cmd_train(toy_config, out)
    return {"dir": out, "checkpoint": out / harness.CHECKPOINT_NAME, "params": params,
            "history": history, "sched": toy_config.make_schedule()}


@pytest.fixture(scope="session")
def eval_set(toy_config):
    d = toy_config.data
    corpus = harness.eval_corpus_from_config(toy_config)
    grids, conds = harness.rasterize_corpus(corpus, d.H, d.W, d.K)
    return corpus, grids, conds


@pytest.fixture
def small_dims():
    return denoiser.Dims(K=3, H=2, W=2, steps=10, hidden=8, layers=2, time_dim=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: s.split("criterion ")[1]):
            terminalreporter.write_line(line)
