"""Multi-depth token-grid fusion: project, refine, upsample, concatenate.

Each pyramid level goes through a 1x1 channel projection, a reflect-padded
3x3 refinement convolution, and bilinear upsampling to a shared target grid;
the per-level maps are then concatenated channel-wise in tap-layer order.
All weights live in a flat name->array dict so the trainer and checkpoint
can treat them uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import FeaturePyramid
from .errors import ConfigurationError, ContractError
from .ops import bilinear_resize, bilinear_resize_adjoint, conv3x3_backward, conv3x3_forward


@dataclass(frozen=True)
class FusionConfig:
    """Fusion hyperparameters.

    Attributes:
        proj_dim: channels after the per-level 1x1 projection. Fused channel
            count is proj_dim * number of levels.
        target_cell_pixels: pixels per fused cell; None keeps the token grid.
        init_seed: seed for fan-in-scaled weight initialization.
    """

    proj_dim: int = 64
    target_cell_pixels: int | None = None
    init_seed: int = 0

    def __post_init__(self):
        if self.proj_dim < 1:
            raise ConfigurationError(f"proj_dim must be >= 1, got {self.proj_dim}")
        if self.target_cell_pixels is not None and self.target_cell_pixels < 1:
            raise ConfigurationError("target_cell_pixels must be >= 1")

    def to_dict(self) -> dict:
        return {
            "proj_dim": self.proj_dim,
            "target_cell_pixels": self.target_cell_pixels,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(
            proj_dim=int(d.get("proj_dim", 64)),
            target_cell_pixels=d.get("target_cell_pixels"),
            init_seed=int(d.get("init_seed", 0)),
        )


@dataclass(frozen=True)
class FusedMap:
    """Concatenated multi-level feature map on the target grid."""

    grid: np.ndarray  # (rows, cols, proj_dim * L) or (B, rows, cols, proj_dim * L)
    cell_pixels: float

    @property
    def channels(self) -> int:
        return self.grid.shape[-1]


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float64)


def init_fusion_params(
    cfg: FusionConfig, token_dim: int, num_levels: int, seed: int | None = None
) -> dict[str, np.ndarray]:
    """Deterministic fan-in-scaled uniform init; biases zero.

    Weight names follow ``fusion.levelN.{proj_w,proj_b,refine_w,refine_b}``
    with level order equal to tap-layer order.
    """
    if token_dim < 1 or num_levels < 1:
        raise ConfigurationError("token_dim and num_levels must be >= 1")
    rng = np.random.default_rng(cfg.init_seed if seed is None else seed)
    c = cfg.proj_dim
    params: dict[str, np.ndarray] = {}
    for lvl in range(num_levels):
        params[f"fusion.level{lvl}.proj_w"] = _fan_in_uniform(rng, token_dim, (token_dim, c))
        params[f"fusion.level{lvl}.proj_b"] = np.zeros(c, dtype=np.float64)
        params[f"fusion.level{lvl}.refine_w"] = _fan_in_uniform(rng, 9 * c, (9 * c, c))
        params[f"fusion.level{lvl}.refine_b"] = np.zeros(c, dtype=np.float64)
    return params


def _target_grid(pyramid_grid: tuple[int, int], patch_size: int, cfg: FusionConfig):
    if cfg.target_cell_pixels is None or cfg.target_cell_pixels == patch_size:
        return pyramid_grid, float(patch_size)
    rows, cols = pyramid_grid
    scale = patch_size / cfg.target_cell_pixels
    return (int(round(rows * scale)), int(round(cols * scale))), float(cfg.target_cell_pixels)


def fuse_forward(pyramid: FeaturePyramid, cfg: FusionConfig, params: dict[str, np.ndarray]):
    """Fuse a pyramid; returns (FusedMap, cache) with cache for the backward pass.

    Token grids are stacked with an implicit batch axis of 1; `fuse_batch_forward`
    accepts pre-stacked (B, rows, cols, D) levels for training batches.
    """
    levels = [grid[None] for _, grid in pyramid.levels]
    fused, cache = fuse_batch_forward(levels, pyramid.grid_shape, pyramid.patch_size, cfg, params)
    return FusedMap(grid=fused[0], cell_pixels=cache["cell_pixels"]), cache


def fuse_batch_forward(
    level_stacks: list[np.ndarray],
    grid_shape: tuple[int, int],
    patch_size: int,
    cfg: FusionConfig,
    params: dict[str, np.ndarray],
):
    """Forward fusion over batched levels: list of (B, rows, cols, D) arrays."""
    out_grid, cell_pixels = _target_grid(grid_shape, patch_size, cfg)
    pieces = []
    caches = []
    for lvl, tokens in enumerate(level_stacks):
        try:
            w_p = params[f"fusion.level{lvl}.proj_w"]
            b_p = params[f"fusion.level{lvl}.proj_b"]
            w_r = params[f"fusion.level{lvl}.refine_w"]
            b_r = params[f"fusion.level{lvl}.refine_b"]
        except KeyError as exc:
            raise ContractError(f"fusion params missing level {lvl}: {exc}") from None
        if tokens.shape[-1] != w_p.shape[0]:
            raise ContractError(
                f"level {lvl} token dim {tokens.shape[-1]} != proj weight fan-in {w_p.shape[0]}"
            )
        x = tokens.astype(np.float64, copy=False)
        proj = x @ w_p + b_p
        refined, conv_cache = conv3x3_forward(proj, w_r, b_r)
        up = bilinear_resize(refined, out_grid)
        pieces.append(up)
        caches.append({"tokens": x, "conv": conv_cache, "refined_shape": refined.shape})
    fused = np.concatenate(pieces, axis=-1)
    cache = {
        "levels": caches,
        "proj_dim": cfg.proj_dim,
        "grid_shape": grid_shape,
        "cell_pixels": cell_pixels,
        "params": params,
    }
    return fused, cache


def fuse_batch_backward(d_fused: np.ndarray, cache) -> dict[str, np.ndarray]:
    """Parameter gradients of `fuse_batch_forward`; the frozen backbone gets none."""
    c = cache["proj_dim"]
    grid_shape = cache["grid_shape"]
    grads: dict[str, np.ndarray] = {}
    for lvl, lvl_cache in enumerate(cache["levels"]):
        d_up = d_fused[..., lvl * c : (lvl + 1) * c]
        d_refined = bilinear_resize_adjoint(d_up, grid_shape)
        d_proj, d_wr, d_br = conv3x3_backward(d_refined, lvl_cache["conv"])
        x = lvl_cache["tokens"]
        d_wp = np.tensordot(x, d_proj, axes=([0, 1, 2], [0, 1, 2]))
        d_bp = d_proj.sum(axis=(0, 1, 2))
        grads[f"fusion.level{lvl}.proj_w"] = d_wp
        grads[f"fusion.level{lvl}.proj_b"] = d_bp
        grads[f"fusion.level{lvl}.refine_w"] = d_wr
        grads[f"fusion.level{lvl}.refine_b"] = d_br
    return grads


def fuse(pyramid: FeaturePyramid, cfg: FusionConfig, params: dict[str, np.ndarray]) -> FusedMap:
    """Inference-only fusion (no cache retained)."""
    fused, _ = fuse_forward(pyramid, cfg, params)
    return fused


def fusion_param_count(cfg: FusionConfig, token_dim: int, num_levels: int) -> int:
    per_level = token_dim * cfg.proj_dim + cfg.proj_dim + 9 * cfg.proj_dim * cfg.proj_dim + cfg.proj_dim
    return per_level * num_levels
