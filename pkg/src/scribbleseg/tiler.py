"""Overlapped-tile inference with radial blending and TV post-smoothing.

Large images are covered by overlapping square tiles; each tile is run
through the single-image pipeline and its probabilities are blended with a
radially symmetric squared-cosine mask that peaks at the tile center. After
stitching, an optional total-variation smoothing pass (Chambolle projection,
per class channel) suppresses high-frequency noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from skimage.restoration import denoise_tv_chambolle

from .decoder import LabelMask, ProbabilityMap, argmax_mask
from .errors import ConfigurationError, ContractError
from .images import ImagePlane, crop_plane, normalize_plane
from .model import ModelState, infer_image

DEFAULT_TILE_SIZE = 512
DEFAULT_OVERLAP = 0.5
DEFAULT_EPS_BLEND = 0.01
TV_MAX_ITER = 50
TV_TOLERANCE = 2e-4


def _axis_origins(size: int, tile: int, stride: int) -> list[int]:
    if size <= tile:
        return [0]
    xs = list(range(0, size - tile + 1, stride))
    if xs[-1] != size - tile:
        xs.append(size - tile)
    return xs


@dataclass(frozen=True)
class TileLayout:
    """Tile origins covering an image with a fixed square tile and overlap."""

    image_shape: tuple[int, int]
    tile_size: int = DEFAULT_TILE_SIZE
    overlap_fraction: float = DEFAULT_OVERLAP
    origins: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        if self.tile_size < 2:
            raise ConfigurationError(f"tile_size must be >= 2, got {self.tile_size}")
        if not 0.0 < self.overlap_fraction < 1.0:
            raise ConfigurationError(
                f"overlap_fraction must be in (0, 1), got {self.overlap_fraction}"
            )
        h, w = self.image_shape
        stride = max(1, int(round(self.tile_size * (1.0 - self.overlap_fraction))))
        ys = _axis_origins(h, self.tile_size, stride)
        xs = _axis_origins(w, self.tile_size, stride)
        object.__setattr__(self, "origins", tuple((y, x) for y in ys for x in xs))

    def tile_shape(self, origin: tuple[int, int]) -> tuple[int, int]:
        h, w = self.image_shape
        y, x = origin
        return min(self.tile_size, h - y), min(self.tile_size, w - x)

    def covers_everything(self) -> bool:
        h, w = self.image_shape
        cover = np.zeros((h, w), dtype=bool)
        for y, x in self.origins:
            th, tw = self.tile_shape((y, x))
            cover[y : y + th, x : x + tw] = True
        return bool(cover.all())


def make_blend_mask(shape: int | tuple[int, int], eps_blend: float = DEFAULT_EPS_BLEND) -> np.ndarray:
    """Radial squared-cosine blend weights, floored at eps_blend.

    w(r) = max(eps, cos^2(pi/2 * min(r/R, 1))) with r the distance from the
    tile center (in pixel-center coordinates) and R half the tile diagonal,
    so corners land exactly on the floor. Maximal at the center and
    non-increasing with radius.
    """
    if isinstance(shape, int):
        shape = (shape, shape)
    h, w = shape
    if h < 1 or w < 1:
        raise ConfigurationError(f"blend mask shape must be positive, got {shape}")
    if not 0.0 < eps_blend <= 1.0:
        raise ConfigurationError(f"eps_blend must be in (0, 1], got {eps_blend}")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy = (np.arange(h) - cy)[:, None]
    xx = (np.arange(w) - cx)[None, :]
    r = np.sqrt(yy**2 + xx**2)
    radius = np.sqrt(cy**2 + cx**2)
    if radius == 0.0:
        return np.ones((h, w))
    t = np.minimum(r / radius, 1.0)
    weights = np.cos(0.5 * np.pi * t) ** 2
    return np.maximum(weights, eps_blend)


def tiled_inference(
    image: ImagePlane,
    state: ModelState,
    layout: TileLayout | None = None,
    eps_blend: float = DEFAULT_EPS_BLEND,
    infer_fn=None,
) -> ProbabilityMap:
    """Blend per-tile probability maps into one seamless full-image map.

    Per tile: single-image inference, multiply by the blend mask, accumulate
    weighted probabilities and weights, divide, renormalize. A single tile
    covering the whole image short-circuits to plain inference (bit-identical
    to the non-tiled path). A tile that fails with MemoryError is split into
    four quadrants and retried once before giving up.
    """
    plane = normalize_plane(image)
    h, w = plane.shape
    if layout is None:
        layout = TileLayout(image_shape=(h, w))
    if layout.image_shape != (h, w):
        raise ContractError(f"layout {layout.image_shape} does not match image {(h, w)}")
    infer = infer_fn if infer_fn is not None else infer_image

    if len(layout.origins) == 1 and layout.tile_shape(layout.origins[0]) == (h, w):
        return infer(state, plane)

    k = state.decoder_cfg.num_classes
    acc_p = np.zeros((h, w, k), dtype=np.float64)
    acc_w = np.zeros((h, w), dtype=np.float64)

    def run_tile(y, x, th, tw, may_split=True):
        tile = crop_plane(plane, y, x, th, tw)
        try:
            probs = infer(state, tile)
        except MemoryError:
            if not may_split or min(th, tw) < 2 * state.spec.patch_size:
                raise
            hy, hx = th // 2, tw // 2
            for sy, sx, sh, sw in (
                (y, x, hy, hx),
                (y, x + hx, hy, tw - hx),
                (y + hy, x, th - hy, hx),
                (y + hy, x + hx, th - hy, tw - hx),
            ):
                run_tile(sy, sx, sh, sw, may_split=False)
            return
        mask = make_blend_mask((th, tw), eps_blend)
        acc_p[y : y + th, x : x + tw] += mask[:, :, None] * probs.data
        acc_w[y : y + th, x : x + tw] += mask

    for y, x in layout.origins:
        th, tw = layout.tile_shape((y, x))
        run_tile(y, x, th, tw)

    if not (acc_w > 0).all():
        raise ContractError("tile layout left pixels with zero blend weight")
    out = acc_p / acc_w[:, :, None]
    out /= out.sum(axis=-1, keepdims=True)
    return ProbabilityMap(data=out, spacing_um=image.spacing_um)


def tv_smooth(prob: ProbabilityMap, tv_weight: float) -> ProbabilityMap:
    """Chambolle-projection TV denoising per class channel, then renormalize.

    A weight of 0 is the identity. Iterations are capped at TV_MAX_ITER with
    duality-gap tolerance TV_TOLERANCE.
    """
    if tv_weight < 0:
        raise ConfigurationError(f"tv_weight must be >= 0, got {tv_weight}")
    if tv_weight == 0.0:
        return prob
    data = prob.data.astype(np.float64, copy=True)
    for c in range(data.shape[2]):
        data[:, :, c] = denoise_tv_chambolle(
            data[:, :, c], weight=tv_weight, eps=TV_TOLERANCE, max_num_iter=TV_MAX_ITER
        )
    data = np.clip(data, 0.0, None)
    sums = data.sum(axis=-1, keepdims=True)
    sums[sums == 0.0] = 1.0
    data /= sums
    return ProbabilityMap(data=data, spacing_um=prob.spacing_um)


def save_probability_tiff(prob: ProbabilityMap, path) -> None:
    """Multi-page float32 TIFF, one page per class channel."""
    pages = [Image.fromarray(prob.data[:, :, c].astype(np.float32), mode="F")
             for c in range(prob.data.shape[2])]
    pages[0].save(path, save_all=True, append_images=pages[1:])


def load_probability_tiff(path, spacing_um: float = 1.0) -> ProbabilityMap:
    with Image.open(path) as img:
        channels = []
        for i in range(getattr(img, "n_frames", 1)):
            img.seek(i)
            channels.append(np.asarray(img, dtype=np.float64))
    return ProbabilityMap(data=np.stack(channels, axis=-1), spacing_um=spacing_um)


def save_label_mask_png(
    mask: LabelMask, path, class_table: list[dict] | None = None, sidecar_path=None
) -> None:
    """8-bit indexed PNG plus a JSON sidecar carrying the class/color table."""
    img = Image.fromarray(mask.data.astype(np.uint8), mode="P")
    palette = np.zeros((256, 3), dtype=np.uint8)
    table = class_table or []
    for entry in table:
        cid = int(entry["id"])
        palette[cid] = _parse_color(entry.get("color", "#808080"))
    img.putpalette(palette.reshape(-1).tolist())
    img.save(path)
    if sidecar_path is not None:
        with open(sidecar_path, "w") as f:
            json.dump({"classes": table, "spacing_um": mask.spacing_um}, f, indent=2)


def _parse_color(color: str) -> tuple[int, int, int]:
    c = color.lstrip("#")
    return tuple(int(c[i : i + 2], 16) for i in (0, 2, 4))


def predict_mask(
    image: ImagePlane,
    state: ModelState,
    tile_size: int = DEFAULT_TILE_SIZE,
    overlap: float = DEFAULT_OVERLAP,
    tv_weight: float = 0.0,
    eps_blend: float = DEFAULT_EPS_BLEND,
):
    """Full inference pipeline: tiled probabilities, TV smoothing, argmax mask."""
    layout = TileLayout(image_shape=image.shape, tile_size=tile_size, overlap_fraction=overlap)
    prob = tiled_inference(image, state, layout, eps_blend=eps_blend)
    prob = tv_smooth(prob, tv_weight)
    return prob, argmax_mask(prob)
