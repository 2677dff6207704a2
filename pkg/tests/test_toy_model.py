"""Behaviour of the default toy model, trained once per session."""

import numpy as np
import pytest

from ifdiff import harness, layout

pytestmark = pytest.mark.slow


def test_training_loss_falls(toy_run):
    simple = np.array([h.l_simple for h in toy_run["history"]])
    assert len(simple) == 2000
    assert simple[-100:].mean() < 0.5 * simple[:100].mean()


def test_samples_follow_corpus_patterns(toy_run, eval_set):
    model = (toy_run["params"], toy_run["sched"])
    _, _, conds = eval_set
    hits = total = 0
    for j, cond in enumerate(conds[:8]):
        _, cells = harness.generate(model, cond[:3], 8, seed=100 + j)
        hits += sum(layout.is_corpus_pattern(c, 3) for c in cells)
        total += len(cells)
    assert hits / total >= 0.5


def test_condition_steers_class_occupancy(toy_run):
    model = (toy_run["params"], toy_run["sched"])
    occ = {"1,0,0": [], "0.2,0.4,0.4": []}
    for seed in range(10):
        for spec in occ:
            _, cells = harness.generate(model, harness.parse_histogram(spec, 3), 4, seed=seed)
            occ[spec].append(np.mean(cells == 0))
    assert np.mean(occ["1,0,0"]) > np.mean(occ["0.2,0.4,0.4"])


def test_reconstruction_degrades_with_depth(toy_run, eval_set):
    _, grids, conds = eval_set
    model, sched = toy_run["params"], toy_run["sched"]
    psnr = []
    for t_star in (10, 40, 80, 160):
        rows = [r for seed in range(10)
                for r in harness.reconstruction_rows(model, grids[:8], conds[:8], sched, t_star, seed)]
        psnr.append(np.mean([min(r.psnr, 100.0) for r in rows]))
    assert all(a >= b for a, b in zip(psnr, psnr[1:])), psnr
