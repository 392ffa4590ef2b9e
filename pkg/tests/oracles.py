"""Independent reference implementations used to freeze expected test values.

Everything here is deliberately naive (finite differences, O(N^2) pairwise
distances, per-pixel loops) and shares no code with the implementation paths
it checks.
"""

from __future__ import annotations

import math

import numpy as np


def finite_diff_grad(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function, in float64."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max |a - n| / max(|a|, |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def boundary_pixels(mask: np.ndarray) -> list[tuple[int, int]]:
    """4-connectivity boundary: mask pixels with a missing neighbor or at the edge."""
    h, w = mask.shape
    out = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            if y == 0 or y == h - 1 or x == 0 or x == w - 1:
                out.append((y, x))
                continue
            if not (mask[y - 1, x] and mask[y + 1, x] and mask[y, x - 1] and mask[y, x + 1]):
                out.append((y, x))
    return out


def directed_distances(src: list[tuple[int, int]], dst: list[tuple[int, int]]) -> list[float]:
    """Min Euclidean distance from every src pixel to the dst set (O(N^2))."""
    out = []
    for sy, sx in src:
        best = math.inf
        for dy, dx in dst:
            d = math.hypot(sy - dy, sx - dx)
            if d < best:
                best = d
        out.append(best)
    return out


def brute_force_overlap(pred: np.ndarray, gt: np.ndarray, class_id: int, ignore: int = 255):
    """Confusion-count overlap metrics from explicit pixel loops."""
    tp = fp = fn = 0
    h, w = gt.shape
    for y in range(h):
        for x in range(w):
            if gt[y, x] == ignore:
                continue
            p = pred[y, x] == class_id
            g = gt[y, x] == class_id
            if p and g:
                tp += 1
            elif p and not g:
                fp += 1
            elif g and not p:
                fn += 1
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0, 1.0, 1.0, 1.0
    dsc = 2 * tp / (2 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    return dsc, iou, recall, precision


def brute_force_surface(pred: np.ndarray, gt: np.ndarray, class_id: int, spacing_um: float):
    """HD95/ASSD from pairwise boundary distances; None when undefined."""
    pb = boundary_pixels(pred == class_id)
    gb = boundary_pixels(gt == class_id)
    if not pb or not gb:
        return None, None
    union = directed_distances(pb, gb) + directed_distances(gb, pb)
    hd95 = float(np.percentile(np.asarray(union, dtype=np.float64), 95)) * spacing_um
    assd = (math.fsum(union) / len(union)) * spacing_um
    return hd95, assd


def boundary_pixels_fast(mask: np.ndarray) -> np.ndarray:
    """Same 4-connectivity boundary rule as `boundary_pixels`, via array shifts."""
    m = mask.astype(bool)
    interior = np.zeros_like(m)
    interior[1:-1, 1:-1] = (
        m[1:-1, 1:-1]
        & m[:-2, 1:-1]
        & m[2:, 1:-1]
        & m[1:-1, :-2]
        & m[1:-1, 2:]
    )
    return np.argwhere(m & ~interior)


def brute_force_surface_fast(pred: np.ndarray, gt: np.ndarray, class_id: int, spacing_um: float):
    """O(N^2) pairwise-distance surface metrics with numpy broadcasting.

    Independent of the distance-transform implementation path: boundaries come
    from array shifts, distances from an explicit all-pairs matrix.
    """
    pb = boundary_pixels_fast(pred == class_id).astype(np.float64)
    gb = boundary_pixels_fast(gt == class_id).astype(np.float64)
    if len(pb) == 0 or len(gb) == 0:
        return None, None
    d2 = (pb[:, None, 0] - gb[None, :, 0]) ** 2 + (pb[:, None, 1] - gb[None, :, 1]) ** 2
    d = np.sqrt(d2)
    union = np.concatenate([d.min(axis=1), d.min(axis=0)])
    hd95 = float(np.percentile(union, 95)) * spacing_um
    assd = float(union.mean()) * spacing_um
    return hd95, assd


def bilinear_upsample_reference(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Per-pixel corner-aligned bilinear interpolation of (rows, cols, C)."""
    rows, cols, c = grid.shape
    out = np.zeros((out_h, out_w, c), dtype=np.float64)
    for oy in range(out_h):
        sy = 0.0 if rows == 1 or out_h == 1 else oy * (rows - 1) / (out_h - 1)
        y0 = min(int(math.floor(sy)), rows - 1)
        y1 = min(y0 + 1, rows - 1)
        fy = sy - y0
        for ox in range(out_w):
            sx = 0.0 if cols == 1 or out_w == 1 else ox * (cols - 1) / (out_w - 1)
            x0 = min(int(math.floor(sx)), cols - 1)
            x1 = min(x0 + 1, cols - 1)
            fx = sx - x0
            top = grid[y0, x0] * (1 - fx) + grid[y0, x1] * fx
            bot = grid[y1, x0] * (1 - fx) + grid[y1, x1] * fx
            out[oy, ox] = top * (1 - fy) + bot * fy
    return out


def isotropic_tv(img: np.ndarray) -> float:
    """Isotropic total variation of a 2-D array."""
    gy = np.diff(img, axis=0)
    gx = np.diff(img, axis=1)
    gy = np.pad(gy, ((0, 1), (0, 0)))
    gx = np.pad(gx, ((0, 0), (0, 1)))
    return float(np.sum(np.sqrt(gy**2 + gx**2)))
