"""Independent reference implementations used to check the real code.

Everything here is deliberately written the slow, obvious way (plain Python
loops, collections.Counter) and must stay free of imports from the package's
numeric modules, so a bug cannot cancel itself out by being shared.
"""

from __future__ import annotations

from collections import Counter

import numpy as np


def bilinear_at(grid: np.ndarray, py: float, px: float) -> np.ndarray:
    """Bilinear lookup at a continuous point of an (h, w, d) array.

    Convention: the value stored at integer index (i, j) sits at continuous
    coordinate (i + 0.5, j + 0.5); sample coordinates are clamped so queries
    outside the array read the border value.
    """
    h, w = grid.shape[:2]
    gy = min(max(py - 0.5, 0.0), h - 1.0)
    gx = min(max(px - 0.5, 0.0), w - 1.0)
    y0, x0 = int(np.floor(gy)), int(np.floor(gx))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = gy - y0, gx - x0
    top = grid[y0, x0] * (1 - fx) + grid[y0, x1] * fx
    bot = grid[y1, x0] * (1 - fx) + grid[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def roi_align_oracle(
    fmap: np.ndarray,
    box: tuple[float, float, float, float],
    out_h: int,
    out_w: int,
    stride: int = 1,
) -> np.ndarray:
    """Dense reference RoIAlign: 2x2 regular sub-samples per output cell.

    The pixel box is divided by the stride without rounding; each output cell
    averages four bilinear lookups at the cell's (1/4, 3/4) fractions.
    """
    x0, y0, x1, y1 = (v / stride for v in box)
    if x1 - x0 < 1e-6:
        x1 = x0 + 1e-6
    if y1 - y0 < 1e-6:
        y1 = y0 + 1e-6
    ch = (y1 - y0) / out_h
    cw = (x1 - x0) / out_w
    out = np.zeros((out_h, out_w, fmap.shape[2]), dtype=np.float64)
    for i in range(out_h):
        for j in range(out_w):
            acc = np.zeros(fmap.shape[2], dtype=np.float64)
            for sy in (0.25, 0.75):
                for sx in (0.25, 0.75):
                    py = y0 + (i + sy) * ch
                    px = x0 + (j + sx) * cw
                    acc += bilinear_at(fmap.astype(np.float64), py, px)
            out[i, j] = acc / 4.0
    return out


def fd_gradient(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x, element by element."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        hi = float(f(x))
        flat[k] = orig - eps
        lo = float(f(x))
        flat[k] = orig
        gflat[k] = (hi - lo) / (2 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Scale-normalized worst-case disagreement between two gradient arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def f1_counting_oracle(
    pred: dict[str, list[str]], gold: dict[str, list[str]]
) -> tuple[int, int, int]:
    """(true positives, false positives, false negatives) by multiset counting.

    A predicted value is a hit iff the same entity still has an unconsumed
    gold value with the exact same string.
    """
    tp = fp = fn = 0
    for name in set(pred) | set(gold):
        p = Counter(pred.get(name, ()))
        g = Counter(gold.get(name, ()))
        hits = sum((p & g).values())
        tp += hits
        fp += sum(p.values()) - hits
        fn += sum(g.values()) - hits
    return tp, fp, fn


def prf_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
