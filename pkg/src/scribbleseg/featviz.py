"""PCA projection of patch-token embeddings to RGB maps."""

from __future__ import annotations

import numpy as np
from PIL import Image

from . import backbone as bb
from .backbone import BackboneSpec
from .errors import ConfigurationError, InputError
from .images import ImagePlane

_VAR_FLOOR = 1e-12
MID_GRAY = 128


def pca_components(tokens: np.ndarray):
    """Top-3 principal directions of (N, D) tokens with a fixed sign rule.

    Each component is flipped so its largest-magnitude loading is positive,
    making repeated runs bit-identical. Returns (mean, components (3, D),
    scores (N, 3)); all-zero variance yields None components.
    """
    n, d = tokens.shape
    if n < 3 or d < 3:
        raise InputError(f"PCA needs >= 3 tokens of dim >= 3, got {tokens.shape}")
    x = tokens.astype(np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    if float(np.abs(centered).max()) < _VAR_FLOOR:
        return mean, None, None
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:3]
    if comps.shape[0] < 3:
        comps = np.vstack([comps, np.zeros((3 - comps.shape[0], d))])
    for i in range(3):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    scores = centered @ comps.T
    return mean, comps, scores


def pca_rgb(token_grid: np.ndarray):
    """Project a (rows, cols, D) token grid to an 8-bit RGB map.

    Components are rescaled robustly (2nd-98th percentile) to [0, 255].
    Zero-variance inputs produce a uniform mid-gray image flagged degenerate.

    Returns:
        (rgb uint8 (rows, cols, 3), degenerate flag)
    """
    rows, cols, d = token_grid.shape
    tokens = token_grid.reshape(-1, d)
    _, comps, scores = pca_components(tokens)
    if comps is None:
        return np.full((rows, cols, 3), MID_GRAY, dtype=np.uint8), True
    rgb = np.empty((rows * cols, 3), dtype=np.uint8)
    for i in range(3):
        s = scores[:, i]
        lo, hi = np.percentile(s, 2), np.percentile(s, 98)
        if hi - lo < _VAR_FLOOR:
            rgb[:, i] = MID_GRAY
        else:
            rgb[:, i] = np.clip((s - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
    return rgb.reshape(rows, cols, 3), False


def pca_rgb_roi(
    image: ImagePlane,
    spec: BackboneSpec,
    layer: int,
    upsample_to_pixels: bool = False,
):
    """Encode an image, PCA-project one tap layer, optionally upsample for overlay.

    Upsampling is nearest-neighbor to the padded pixel grid, cropped back to
    the source shape.
    """
    if layer not in spec.tap_layers:
        raise ConfigurationError(f"layer {layer} is not a tap layer of {spec.tap_layers}")
    pyramid = bb.encode(image, spec)
    grid = dict(pyramid.levels)[layer]
    rgb, degenerate = pca_rgb(grid)
    if not upsample_to_pixels:
        return rgb, degenerate
    full = np.repeat(np.repeat(rgb, spec.patch_size, axis=0), spec.patch_size, axis=1)
    top, left = pyramid.pad_offset
    h, w = pyramid.source_shape
    return full[top : top + h, left : left + w], degenerate


def save_pca_png(rgb: np.ndarray, path) -> None:
    Image.fromarray(rgb, mode="RGB").save(path)


def save_montage_png(image: ImagePlane, rgb: np.ndarray, path) -> None:
    """Side-by-side (image | PCA map) figure for reports."""
    arr = image.data
    lo, hi = float(arr.min()), float(arr.max())
    gray = ((arr - lo) / (hi - lo) * 255.0).astype(np.uint8) if hi > lo else np.zeros_like(arr, dtype=np.uint8)
    if gray.ndim == 2:
        gray = np.repeat(gray[:, :, None], 3, axis=2)
    h = gray.shape[0]
    scale = h / rgb.shape[0]
    up = np.repeat(np.repeat(rgb, int(np.ceil(scale)), axis=0), int(np.ceil(scale)), axis=1)
    up = up[:h, : gray.shape[1]]
    pad_w = gray.shape[1] - up.shape[1]
    if pad_w > 0:
        up = np.pad(up, ((0, 0), (0, pad_w), (0, 0)))
    pad_h = h - up.shape[0]
    if pad_h > 0:
        up = np.pad(up, ((0, pad_h), (0, 0), (0, 0)))
    montage = np.concatenate([gray, up], axis=1)
    Image.fromarray(montage, mode="RGB").save(path)
