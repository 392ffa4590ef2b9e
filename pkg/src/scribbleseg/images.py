"""Image planes: loading, saving, intensity normalization, and grid padding.

Images are held as float32 arrays of shape (H, W) for grayscale or (H, W, 3)
for RGB, together with the physical pixel spacing in micrometers. 8-bit and
16-bit grayscale as well as 8-bit RGB PNG/TIFF files are accepted.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError

DEFAULT_SPACING_UM = 1.0


@dataclass(frozen=True)
class ImagePlane:
    """A single 2-D image plane with physical pixel spacing.

    Attributes:
        data: float32 array, (H, W) grayscale or (H, W, 3) RGB.
        spacing_um: micrometers per pixel (isotropic).
        normalized: True once percentile intensity normalization has been applied.
    """

    data: np.ndarray
    spacing_um: float = DEFAULT_SPACING_UM
    normalized: bool = False

    def __post_init__(self):
        if self.data.ndim not in (2, 3):
            raise InputError(f"image must be 2-D or 3-D, got shape {self.data.shape}")
        if self.data.ndim == 3 and self.data.shape[2] not in (1, 3):
            raise InputError(f"channel count must be 1 or 3, got {self.data.shape[2]}")
        if self.data.size == 0:
            raise InputError("image is empty")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


def load_image(path: str | Path, spacing_um: float = DEFAULT_SPACING_UM) -> ImagePlane:
    """Load an 8/16-bit grayscale or 8-bit RGB PNG/TIFF into an ImagePlane."""
    try:
        with Image.open(path) as img:
            return decode_image(img, spacing_um)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot decode image {path}: {exc}") from exc


def decode_image_bytes(payload: bytes, spacing_um: float = DEFAULT_SPACING_UM) -> ImagePlane:
    """Decode an in-memory PNG/TIFF payload into an ImagePlane."""
    try:
        with Image.open(io.BytesIO(payload)) as img:
            return decode_image(img, spacing_um)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot decode image payload: {exc}") from exc


def decode_image(img: Image.Image, spacing_um: float) -> ImagePlane:
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float32)
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float32)
    elif img.mode == "P":
        arr = np.asarray(img.convert("L"), dtype=np.float32)
    elif img.mode in ("RGB", "RGBA"):
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    elif img.mode == "F":
        arr = np.asarray(img, dtype=np.float32)
    else:
        raise InputError(f"unsupported image mode {img.mode!r}")
    return ImagePlane(data=arr, spacing_um=spacing_um)


def save_image(plane: ImagePlane, path: str | Path) -> None:
    """Save an ImagePlane as 8-bit PNG/TIFF (grayscale or RGB), rescaled to [0, 255]."""
    arr = plane.data
    lo, hi = float(arr.min()), float(arr.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    out = ((arr - lo) * scale).astype(np.uint8)
    Image.fromarray(out).save(path)


def normalize_plane(plane: ImagePlane, lo_pct: float = 1.0, hi_pct: float = 99.0) -> ImagePlane:
    """Percentile-rescale intensities to [0, 1] with clipping.

    The rescale window is computed over all pixels (and channels) of the plane,
    so crops taken afterwards share a consistent intensity frame. Constant
    images map to all zeros. Idempotent: an already-normalized plane is
    returned unchanged.
    """
    if plane.normalized:
        return plane
    arr = plane.data.astype(np.float32, copy=False)
    lo = float(np.percentile(arr, lo_pct))
    hi = float(np.percentile(arr, hi_pct))
    if hi - lo < 1e-12:
        out = np.zeros_like(arr, dtype=np.float32)
    else:
        out = np.clip((arr - lo) / (hi - lo), 0.0, 1.0).astype(np.float32)
    return replace(plane, data=out, normalized=True)


def crop_plane(plane: ImagePlane, y0: int, x0: int, h: int, w: int) -> ImagePlane:
    return replace(plane, data=plane.data[y0 : y0 + h, x0 : x0 + w])


def pad_amounts(size: int, multiple: int) -> tuple[int, int]:
    """Symmetric (before, after) padding that rounds `size` up to `multiple`."""
    total = (-size) % multiple
    before = total // 2
    return before, total - before


def _pad_mode(length: int) -> str:
    # np.pad(mode="reflect") needs at least 2 samples along the axis
    return "reflect" if length > 1 else "edge"


def pad_to_multiple(arr: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad a (H, W[, C]) array symmetrically to a multiple of `multiple`.

    Returns the padded array and the (top, left) offset of the original data.
    """
    h, w = arr.shape[:2]
    top, bottom = pad_amounts(h, multiple)
    left, right = pad_amounts(w, multiple)
    if top == bottom == left == right == 0:
        return arr, (0, 0)
    out = arr
    if top or bottom:
        out = np.pad(out, [(top, bottom)] + [(0, 0)] * (arr.ndim - 1), mode=_pad_mode(h))
    if left or right:
        widths = [(0, 0), (left, right)] + [(0, 0)] * (arr.ndim - 2)
        out = np.pad(out, widths, mode=_pad_mode(w))
    return out, (top, left)


@dataclass(frozen=True)
class GridGeometry:
    """Mapping between a padded pixel grid and its coarse cell grid."""

    source_shape: tuple[int, int]
    padded_shape: tuple[int, int]
    pad_offset: tuple[int, int]
    cell_pixels: int
    grid_shape: tuple[int, int] = field(init=False)

    def __post_init__(self):
        rows = self.padded_shape[0] // self.cell_pixels
        cols = self.padded_shape[1] // self.cell_pixels
        object.__setattr__(self, "grid_shape", (rows, cols))

    @classmethod
    def for_image(cls, shape: tuple[int, int], cell_pixels: int) -> "GridGeometry":
        h, w = shape
        top, bottom = pad_amounts(h, cell_pixels)
        left, right = pad_amounts(w, cell_pixels)
        return cls(
            source_shape=(h, w),
            padded_shape=(h + top + bottom, w + left + right),
            pad_offset=(top, left),
            cell_pixels=cell_pixels,
        )
