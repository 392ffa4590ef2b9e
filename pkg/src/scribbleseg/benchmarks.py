"""Synthetic texture benchmarks with known ground truth.

These generators produce images whose regions differ in local texture
statistics (mean level, noise amplitude, smoothness), a wavy-boundary ground
truth map, and sparse programmatic scribbles confined to region interiors.
They stand in for stained histology when exercising the full pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .images import ImagePlane
from .loss import IGNORE_INDEX
from .trainer import ScribbleMask


@dataclass(frozen=True)
class SyntheticBenchmark:
    image: ImagePlane
    gt: np.ndarray           # (H, W) class ids
    scribbles: ScribbleMask
    num_classes: int

    @property
    def scribble_fraction(self) -> float:
        return float(np.count_nonzero(self.scribbles.data != IGNORE_INDEX)) / self.gt.size


def _texture(rng: np.random.Generator, shape, base: float, amp: float, sigma: float) -> np.ndarray:
    noise = rng.standard_normal(shape)
    if sigma > 0:
        noise = ndimage.gaussian_filter(noise, sigma)
        noise /= max(noise.std(), 1e-9)
    return base + amp * noise


def _wavy_disk(size: int, radius_frac: float = 0.33, wobble: float = 0.15) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    cy = cx = (size - 1) / 2.0
    dy, dx = yy - cy, xx - cx
    r = np.hypot(dy, dx)
    theta = np.arctan2(dy, dx)
    boundary = size * radius_frac * (1.0 + wobble * np.sin(3 * theta))
    return r <= boundary


def _wavy_quadrants(size: int, amplitude: float = 40.0, period: float = 300.0) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    split_x = size / 2 + amplitude * np.sin(2 * np.pi * yy / period)
    split_y = size / 2 + amplitude * np.sin(2 * np.pi * xx / period)
    right = xx > split_x
    bottom = yy > split_y
    return (right.astype(np.int64) + 2 * bottom.astype(np.int64))


def _region_strokes(
    region: np.ndarray,
    rng: np.random.Generator,
    n_strokes: int,
    length: int,
    width: int,
    margin: int,
) -> np.ndarray:
    """Short horizontal strokes inside the region, away from its boundary."""
    dist = ndimage.distance_transform_edt(region)
    safe = dist > margin
    mask = np.zeros(region.shape, dtype=bool)
    ys, xs = np.nonzero(safe)
    if len(ys) == 0:  # fall back to thinner margin for skinny regions
        safe = dist > max(margin // 4, 2)
        ys, xs = np.nonzero(safe)
    if len(ys) == 0:
        return mask
    for _ in range(n_strokes):
        i = int(rng.integers(len(ys)))
        y, x = int(ys[i]), int(xs[i])
        stroke = np.zeros_like(mask)
        stroke[y : y + width, x : x + length] = True
        mask |= stroke & safe
    return mask


def make_scribbles(
    gt: np.ndarray,
    rng: np.random.Generator,
    n_strokes: int = 3,
    length: int = 180,
    width: int = 3,
    margin: int = 24,
    spacing_um: float = 1.0,
) -> ScribbleMask:
    """Sparse per-class strokes over a ground-truth map."""
    data = np.full(gt.shape, IGNORE_INDEX, dtype=np.uint8)
    for class_id in np.unique(gt):
        strokes = _region_strokes(gt == class_id, rng, n_strokes, length, width, margin)
        data[strokes] = class_id
    return ScribbleMask(data=data, spacing_um=spacing_um, provenance="synthetic-strokes")


def two_texture_benchmark(
    size: int = 1024, seed: int = 0, spacing_um: float = 1.0
) -> SyntheticBenchmark:
    """A wavy disk of coarse bright texture on a smooth dark background."""
    rng = np.random.default_rng(seed)
    gt = _wavy_disk(size).astype(np.int64)
    background = _texture(rng, (size, size), base=0.30, amp=0.04, sigma=3.0)
    foreground = _texture(rng, (size, size), base=0.70, amp=0.22, sigma=0.0)
    img = np.where(gt == 1, foreground, background).astype(np.float32)
    image = ImagePlane(data=img, spacing_um=spacing_um)
    scribbles = make_scribbles(gt, rng, length=max(32, size // 8), spacing_um=spacing_um)
    return SyntheticBenchmark(image=image, gt=gt, scribbles=scribbles, num_classes=2)


def four_texture_benchmark(
    size: int = 1024, seed: int = 0, spacing_um: float = 1.0
) -> SyntheticBenchmark:
    """Four wavy quadrants with distinct mean/amplitude/smoothness signatures."""
    rng = np.random.default_rng(seed)
    gt = _wavy_quadrants(size)
    recipes = [
        dict(base=0.15, amp=0.03, sigma=3.0),
        dict(base=0.42, amp=0.10, sigma=0.0),
        dict(base=0.66, amp=0.20, sigma=1.5),
        dict(base=0.88, amp=0.28, sigma=0.0),
    ]
    img = np.zeros((size, size), dtype=np.float32)
    for class_id, recipe in enumerate(recipes):
        img[gt == class_id] = _texture(rng, (size, size), **recipe)[gt == class_id]
    image = ImagePlane(data=img, spacing_um=spacing_um)
    scribbles = make_scribbles(gt, rng, length=max(32, size // 8), spacing_um=spacing_um)
    return SyntheticBenchmark(image=image, gt=gt, scribbles=scribbles, num_classes=4)
