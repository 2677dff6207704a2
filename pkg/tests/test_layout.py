import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifdiff import layout
from ifdiff.errors import InvalidConfigError, InvalidDataError, ParseError
from ifdiff.layout import Element, ViewHierarchy
from ifdiff.numerics import tensor_sum


def full(cls):
    return Element(cls, (0, 0, 100, 200))


def test_rasterize_empty_is_background():
    g = layout.rasterize(ViewHierarchy(100, 200), 4, 4, 3)
    assert np.all(g[0] == 1) and np.all(g[1:] == -1)


def test_rasterize_full_cover():
    g = layout.rasterize(ViewHierarchy(100, 200, (full(1),)), 4, 4, 3)
    assert np.all(g[1] == 1) and np.all(g[[0, 2]] == -1)


def test_rasterize_later_element_wins():
    g = layout.rasterize(ViewHierarchy(100, 200, (full(1), full(2))), 4, 4, 3)
    assert np.all(g[2] == 1) and np.all(g[:2] == -1)


def test_rasterize_cell_centers():
    # element covers the left half of a 100-px-wide screen: cell centers 12.5 and 37.5
    vh = ViewHierarchy(100, 100, (Element(1, (0, 0, 50, 100)),))
    cells = layout.decode(layout.rasterize(vh, 2, 4, 2))
    assert cells.tolist() == [[1, 1, 0, 0], [1, 1, 0, 0]]


@pytest.mark.parametrize("el", [Element(3, (0, 0, 10, 10)), Element(1, (95, 0, 10, 10)),
                                Element(1, (0, 0, 0, 10)), Element(-1, (0, 0, 5, 5))])
def test_rasterize_rejects_bad_elements(el):
    with pytest.raises(InvalidDataError):
        layout.rasterize(ViewHierarchy(100, 100, (el,)), 4, 4, 3)


def test_rasterize_rejects_tiny_grid():
    with pytest.raises(InvalidConfigError):
        layout.rasterize(ViewHierarchy(100, 100), 1, 4, 3)


def test_extract_condition():
    bg = layout.one_hot(np.zeros((8, 8), int), 4)
    np.testing.assert_array_equal(layout.extract_condition(bg).histogram, [1, 0, 0, 0])
    cells = np.zeros((8, 8), int)
    cells[:4] = 1
    hist = layout.extract_condition(layout.one_hot(cells, 3)).histogram
    np.testing.assert_array_equal(hist, [0.5, 0.5, 0.0])


def test_extract_condition_rejects_soft_grid():
    g = layout.one_hot(np.zeros((2, 2), int), 2)
    g[0, 0, 0] = 0.3
    with pytest.raises(InvalidDataError):
        layout.extract_condition(g)


def test_condition_validation():
    with pytest.raises(InvalidDataError):
        layout.Condition([0.5, 0.6])
    with pytest.raises(InvalidDataError):
        layout.Condition([1.0, 0.0], [2])
    c = layout.Condition([0.25, 0.75], [1, 0])
    np.testing.assert_array_equal(c.vector(), [0.25, 0.75, 1, 0])


def test_soft_histogram_single_cell():
    g = np.array([2.0, 0.0]).reshape(2, 1, 1)
    e2 = math.exp(2)
    np.testing.assert_allclose(layout.soft_histogram(g, 1.0), [e2 / (e2 + 1), 1 / (e2 + 1)],
                               rtol=0, atol=1e-15)
    assert layout.soft_histogram(g, 1.0)[0] == pytest.approx(0.8808, abs=5e-5)


def test_soft_histogram_sharp_limit(rng):
    g = layout.one_hot(rng.integers(0, 4, (8, 8)), 4)
    hard = layout.extract_condition(g).histogram
    np.testing.assert_allclose(layout.soft_histogram(g, 0.05), hard, atol=1e-3)


def test_soft_histogram_uniform():
    g = np.full((5, 3, 3), 0.7)
    np.testing.assert_allclose(layout.soft_histogram(g, 0.5), np.full(5, 0.2), atol=1e-15)


def test_soft_histogram_rejects_temperature():
    with pytest.raises(InvalidConfigError):
        layout.soft_histogram(np.zeros((2, 2, 2)), 0.0)


def test_soft_histogram_gradient(rng):
    """Backward against central differences of a random linear functional."""
    g = rng.normal(size=(2, 3, 2, 2))
    w = rng.normal(size=(2, 3))
    f = lambda: float(np.sum(w * layout.soft_histogram(g, 0.7)))
    analytic = layout.soft_histogram_backward(g, 0.7, w)
    numeric = np.zeros_like(g)
    for idx in np.ndindex(g.shape):
        orig = g[idx]
        g[idx] = orig + 1e-6
        up = f()
        g[idx] = orig - 1e-6
        numeric[idx] = (up - f()) / 2e-6
        g[idx] = orig
    np.testing.assert_allclose(analytic, numeric, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 10.0))
def test_soft_histogram_on_simplex(seed, temperature):
    g = np.random.default_rng(seed).uniform(-3, 3, (4, 3, 5))
    q = layout.soft_histogram(g, temperature)
    assert np.all(q >= 0) and abs(q.sum() - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.sampled_from([(8, 8), (4, 16), (2, 2)]))
def test_hard_histogram_sums_to_one_exactly(seed, K, shape):
    # power-of-two cell counts make every count/N fraction exact
    cells = np.random.default_rng(seed).integers(0, K, shape)
    assert tensor_sum(layout.extract_condition(layout.one_hot(cells, K)).histogram) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_hard_histogram_sums_to_one_any_grid(seed, K):
    cells = np.random.default_rng(seed).integers(0, K, (7, 5))
    assert abs(tensor_sum(layout.extract_condition(layout.one_hot(cells, K)).histogram) - 1.0) <= 4e-16


def test_synth_corpus_deterministic():
    assert layout.synth_corpus(3, 20, 8, 8, 4) == layout.synth_corpus(3, 20, 8, 8, 4)
    assert layout.synth_corpus(3, 20, 8, 8, 4) != layout.synth_corpus(4, 20, 8, 8, 4)


@pytest.mark.parametrize("H,W,K", [(8, 8, 3), (8, 8, 5), (16, 12, 4), (3, 2, 3)])
def test_synth_corpus_contract(H, W, K):
    for vh in layout.synth_corpus(1, 64, H, W, K):
        vh.validate(K)
        assert 2 <= len(vh.elements) <= 5
        g = layout.rasterize(vh, H, W, K)
        assert layout.is_one_hot(g)
        assert layout.is_corpus_pattern(layout.decode(g), K)


def test_synth_corpus_background_occupancy():
    grids = [layout.rasterize(vh, 8, 8, 3) for vh in layout.synth_corpus(0, 256, 8, 8, 3)]
    bg = np.mean([layout.extract_condition(g).histogram[0] for g in grids])
    assert 0.3 <= bg <= 0.9
    assert bg == pytest.approx(0.66864013671875)  # frozen generator output


def test_synth_corpus_rejects_small_vocab():
    with pytest.raises(InvalidConfigError):
        layout.synth_corpus(0, 4, 8, 8, 2)


def test_corpus_pattern_checker_rejects_noise():
    cells = layout.decode(layout.rasterize(layout.synth_corpus(0, 1, 8, 8, 3)[0], 8, 8, 3))
    assert layout.is_corpus_pattern(cells, 3)
    broken = cells.copy()
    broken[0, 3] = 0
    assert not layout.is_corpus_pattern(broken, 3)
    stray = cells.copy()
    stray[5, 0] = 1
    assert not layout.is_corpus_pattern(stray, 3)


def test_jsonl_round_trip(tmp_path):
    corpus = layout.synth_corpus(2, 30, 8, 8, 4)
    path = tmp_path / "c.jsonl"
    layout.save_jsonl(corpus, path)
    assert len(path.read_text().splitlines()) == 30
    assert layout.load_jsonl(path, 4) == corpus


def test_jsonl_empty(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    assert layout.load_jsonl(path) == []


def _write(tmp_path, records):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(r if isinstance(r, str) else json.dumps(r) for r in records) + "\n")
    return path


GOOD = {"screen_w": 10, "screen_h": 10, "elements": [{"class_id": 1, "bbox": [0, 0, 5, 5]}]}


@pytest.mark.parametrize("bad,fragment", [
    ({"screen_w": 10, "screen_h": 10, "elements": [{"class_id": 1, "bbox": [0, 0, -5, 5]}]}, "width"),
    ({"screen_w": 10, "elements": []}, "screen_h"),
    ({"screen_w": 10, "screen_h": 10, "elements": [{"class_id": 9, "bbox": [0, 0, 5, 5]}]}, "class"),
    ({"screen_w": 10, "screen_h": 10, "elements": [{"class_id": 1, "bbox": [8, 0, 5, 5]}]}, "outside"),
    ("{not json", "invalid JSON"),
])
def test_jsonl_errors_name_the_line(tmp_path, bad, fragment):
    path = _write(tmp_path, [GOOD, GOOD, bad])
    with pytest.raises(ParseError) as exc:
        layout.load_jsonl(path, K=3)
    assert exc.value.line == 3
    assert "line 3" in str(exc.value) and fragment in str(exc.value)
