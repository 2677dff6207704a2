"""Interface layouts: view hierarchies, class-channel grids and conditions.

A grid is a float64 array of shape ``(K, H, W)`` with values in [-1, 1];
channel ``k`` is +1 where the cell shows class ``k`` (class 0 is background).
Batches of grids carry a leading batch axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, InvalidDataError, ParseError
from .numerics import Rng

# pixel size of one grid cell in synthetic screens
CELL_W = 45
CELL_H = 80


@dataclass(frozen=True)
class Element:
    class_id: int
    bbox: tuple[int, int, int, int]  # x, y, w, h in pixels


@dataclass(frozen=True)
class ViewHierarchy:
    screen_w: int
    screen_h: int
    elements: tuple[Element, ...] = ()

    def validate(self, K: int | None = None) -> "ViewHierarchy":
        if self.screen_w <= 0 or self.screen_h <= 0:
            raise InvalidDataError(f"screen size must be positive, got {self.screen_w}x{self.screen_h}")
        for i, el in enumerate(self.elements):
            x, y, w, h = el.bbox
            if w <= 0 or h <= 0:
                raise InvalidDataError(f"element {i}: bbox width/height must be positive, got {el.bbox}")
            if x < 0 or y < 0 or x + w > self.screen_w or y + h > self.screen_h:
                raise InvalidDataError(
                    f"element {i}: bbox {el.bbox} outside screen {self.screen_w}x{self.screen_h}")
            if el.class_id < 0 or (K is not None and el.class_id >= K):
                raise InvalidDataError(f"element {i}: class {el.class_id} outside 0..{'K-1' if K is None else K - 1}")
        return self


@dataclass(frozen=True, eq=False)
class Condition:
    histogram: np.ndarray
    context: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        hist = np.asarray(self.histogram, dtype=np.float64)
        ctx = np.asarray(self.context, dtype=np.float64)
        if hist.ndim != 1 or hist.size < 1:
            raise InvalidDataError("histogram must be a non-empty vector")
        if np.any(hist < 0) or abs(hist.sum() - 1.0) > 1e-9:
            raise InvalidDataError(f"histogram must lie on the simplex, got {hist.tolist()}")
        if ctx.ndim != 1 or np.any((ctx != 0) & (ctx != 1)):
            raise InvalidDataError("context flags must be a 0/1 vector")
        object.__setattr__(self, "histogram", hist)
        object.__setattr__(self, "context", ctx)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.histogram, self.context])

    def __eq__(self, other):
        if not isinstance(other, Condition):
            return NotImplemented
        return np.array_equal(self.histogram, other.histogram) and np.array_equal(self.context, other.context)


def condition_matrix(conditions) -> np.ndarray:
    return np.stack([c.vector() for c in conditions])


def rasterize(vh: ViewHierarchy, H: int, W: int, K: int) -> np.ndarray:
    """Class-channel grid; each cell takes the topmost element covering its center."""
    if H < 2 or W < 2:
        raise InvalidConfigError(f"grid must be at least 2x2, got {H}x{W}")
    vh.validate(K)
    cells = np.zeros((H, W), dtype=np.int64)
    cy = (np.arange(H) + 0.5) * vh.screen_h / H
    cx = (np.arange(W) + 0.5) * vh.screen_w / W
    for el in vh.elements:  # later elements overwrite earlier ones
        x, y, w, h = el.bbox
        rows = (cy >= y) & (cy < y + h)
        cols = (cx >= x) & (cx < x + w)
        cells[np.ix_(rows, cols)] = el.class_id
    return one_hot(cells, K)


def one_hot(cells: np.ndarray, K: int) -> np.ndarray:
    cells = np.asarray(cells)
    grid = -np.ones((K,) + cells.shape, dtype=np.float64)
    for k in range(K):
        grid[k][cells == k] = 1.0
    return grid


def decode(grid: np.ndarray) -> np.ndarray:
    """Per-cell argmax: ``(K, H, W)`` -> ``(H, W)`` class map (batches supported)."""
    return np.argmax(np.asarray(grid), axis=-3)


def occupancy(cells: np.ndarray, K: int) -> np.ndarray:
    cells = np.asarray(cells)
    counts = np.bincount(cells.ravel(), minlength=K)[:K]
    return counts / cells.size


def is_one_hot(grid: np.ndarray) -> bool:
    grid = np.asarray(grid)
    return bool(np.all((grid == 1.0) | (grid == -1.0)) and np.all((grid == 1.0).sum(axis=-3) == 1))


def extract_condition(grid: np.ndarray, context=None) -> Condition:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise InvalidDataError(f"expected a (K, H, W) grid, got shape {grid.shape}")
    if not is_one_hot(grid):
        raise InvalidDataError("grid is not one-hot (use soft_histogram for generated grids)")
    K, H, W = grid.shape
    hist = (grid == 1.0).reshape(K, -1).sum(axis=1) / (H * W)
    return Condition(hist, np.zeros(0) if context is None else context)


def _softmax_cells(grid: np.ndarray, temperature: float) -> np.ndarray:
    z = grid / temperature
    z = z - z.max(axis=-3, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-3, keepdims=True)


def soft_histogram(grid: np.ndarray, temperature: float) -> np.ndarray:
    """Mean over cells of the softmax across class channels.

    Accepts ``(K, H, W)`` or a batch ``(B, K, H, W)``; returns ``(K,)`` or ``(B, K)``.
    """
    if not temperature > 0:
        raise InvalidConfigError(f"temperature must be > 0, got {temperature!r}")
    grid = np.asarray(grid, dtype=np.float64)
    s = _softmax_cells(grid, temperature)
    return s.reshape(s.shape[:-2] + (-1,)).mean(axis=-1)


def soft_histogram_backward(grid: np.ndarray, temperature: float, d_hist: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. ``grid`` given the upstream gradient on the histogram."""
    grid = np.asarray(grid, dtype=np.float64)
    s = _softmax_cells(grid, temperature)
    n_cells = grid.shape[-1] * grid.shape[-2]
    g = np.asarray(d_hist, dtype=np.float64)[..., :, None, None]
    inner = (s * g).sum(axis=-3, keepdims=True)
    return s * (g - inner) / (n_cells * temperature)


def synth_corpus(seed: int, n: int, H: int, W: int, K: int) -> list[ViewHierarchy]:
    """Synthetic screens: a top bar of class 1 plus 1-4 widgets in distinct slots.

    The area under the bar is split into a 2x2 grid of slots; each widget is
    a cell-aligned rectangle inside its own slot, so placement never rejects.
    """
    if K < 3:
        raise InvalidConfigError(f"synthetic corpus needs K >= 3, got {K}")
    if n < 1:
        raise InvalidConfigError(f"corpus size must be >= 1, got {n}")
    if H < 3 or W < 2:
        raise InvalidConfigError(f"synthetic corpus needs H >= 3 and W >= 2, got {H}x{W}")
    rng = Rng(seed)
    sw, sh = W * CELL_W, H * CELL_H
    bar = math.ceil(H / 8)
    slots = _slots(H, W, bar)
    corpus = []
    for _ in range(n):
        elements = [Element(1, (0, 0, sw, bar * CELL_H))]
        count = int(rng.integers(1, len(slots) + 1, 1)[0])
        for si in rng.permutation(len(slots))[:count]:
            r0, r1, c0, c1 = slots[si]
            u = rng.uniform(4)
            h = 1 + int(u[0] * (r1 - r0))
            w = 1 + int(u[1] * (c1 - c0))
            r = r0 + int(u[2] * (r1 - r0 - h + 1))
            c = c0 + int(u[3] * (c1 - c0 - w + 1))
            cls = 2 + int(rng.integers(0, K - 2, 1)[0])
            elements.append(Element(cls, (c * CELL_W, r * CELL_H, w * CELL_W, h * CELL_H)))
        corpus.append(ViewHierarchy(sw, sh, tuple(elements)))
    return corpus


def _slots(H, W, bar):
    rmid = bar + (H - bar) // 2
    cmid = W // 2
    rows = [(bar, rmid), (rmid, H)] if rmid > bar else [(bar, H)]
    cols = [(0, cmid), (cmid, W)]
    return [(r0, r1, c0, c1) for r0, r1 in rows for c0, c1 in cols]


def is_corpus_pattern(cells: np.ndarray, K: int) -> bool:
    """True if a decoded class map could have come from ``synth_corpus``."""
    cells = np.asarray(cells)
    H, W = cells.shape
    bar = math.ceil(H / 8)
    if np.any(cells[:bar] != 1) or np.any(cells[bar:] == 1) or np.any(cells >= K):
        return False
    n_widgets = 0
    for r0, r1, c0, c1 in _slots(H, W, bar):
        block = cells[r0:r1, c0:c1]
        fg = np.argwhere(block != 0)
        if fg.size == 0:
            continue
        (ra, ca), (rb, cb) = fg.min(axis=0), fg.max(axis=0)
        rect = block[ra:rb + 1, ca:cb + 1]
        if np.any(rect != rect[0, 0]) or len(fg) != rect.size:
            return False
        n_widgets += 1
    return n_widgets >= 1


def _to_record(vh: ViewHierarchy) -> dict:
    return {
        "screen_w": vh.screen_w,
        "screen_h": vh.screen_h,
        "elements": [{"class_id": e.class_id, "bbox": list(e.bbox)} for e in vh.elements],
    }


def _from_record(obj, K=None) -> ViewHierarchy:
    if not isinstance(obj, dict):
        raise InvalidDataError("expected a JSON object")
    for key in ("screen_w", "screen_h", "elements"):
        if key not in obj:
            raise InvalidDataError(f"missing field {key!r}")
    elements = []
    for i, el in enumerate(obj["elements"]):
        if not isinstance(el, dict) or "class_id" not in el or "bbox" not in el:
            raise InvalidDataError(f"element {i}: needs 'class_id' and 'bbox'")
        bbox = el["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4 or not all(isinstance(v, int) for v in bbox):
            raise InvalidDataError(f"element {i}: bbox must be four integers, got {bbox!r}")
        if not isinstance(el["class_id"], int):
            raise InvalidDataError(f"element {i}: class_id must be an integer")
        elements.append(Element(el["class_id"], tuple(bbox)))
    if not isinstance(obj["screen_w"], int) or not isinstance(obj["screen_h"], int):
        raise InvalidDataError("screen_w and screen_h must be integers")
    return ViewHierarchy(obj["screen_w"], obj["screen_h"], tuple(elements)).validate(K)


def save_jsonl(corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for vh in corpus:
            fh.write(json.dumps(_to_record(vh), separators=(",", ":")) + "\n")


def load_jsonl(path, K: int | None = None) -> list[ViewHierarchy]:
    corpus = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            corpus.append(_from_record(json.loads(line), K))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
        except InvalidDataError as exc:
            raise ParseError(str(exc), lineno) from None
    return corpus
