"""Model state: frozen backbone spec + trainable fusion/decoder head.

Bundles the pieces every consumer needs (trainer, tiler, service, CLI) and
owns the single-image inference path encode -> fuse -> decode -> pixel
probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backbone as bb
from .backbone import BackboneSpec, FeaturePyramid
from .decoder import (
    DecoderConfig,
    ProbabilityMap,
    assert_lightweight,
    decode_backward,
    decode_forward,
    init_decoder_params,
    to_pixel_probabilities,
)
from .fusion import FusionConfig, fuse_batch_backward, fuse_batch_forward, init_fusion_params
from .images import ImagePlane


@dataclass
class ModelState:
    """Trainable head parameters plus the configuration that shaped them."""

    spec: BackboneSpec
    fusion_cfg: FusionConfig
    decoder_cfg: DecoderConfig
    params: dict[str, np.ndarray]
    epoch: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    head_param_count: int = 0

    @property
    def fused_channels(self) -> int:
        return self.fusion_cfg.proj_dim * len(self.spec.tap_layers)

    def backbone_hash(self) -> str:
        return bb.backbone_hash(self.spec)


def init_model(
    spec: BackboneSpec,
    fusion_cfg: FusionConfig,
    decoder_cfg: DecoderConfig,
    seed: int = 0,
) -> ModelState:
    """Build a fresh model: seeded head weights over a frozen backbone.

    The trainable head is checked against the lightweight parameter budget at
    construction; its size is recorded on the state.
    """
    provider = bb.get_provider(spec)
    token_dim = provider.token_dim
    num_levels = len(spec.tap_layers)
    params = init_fusion_params(fusion_cfg, token_dim, num_levels, seed=seed)
    params.update(
        init_decoder_params(
            decoder_cfg, fusion_cfg.proj_dim * num_levels, seed=seed + 1
        )
    )
    n = assert_lightweight(params)
    return ModelState(
        spec=spec,
        fusion_cfg=fusion_cfg,
        decoder_cfg=decoder_cfg,
        params=params,
        epoch=0,
        rng=np.random.default_rng(seed),
        head_param_count=n,
    )


def head_forward(
    state: ModelState,
    level_stacks: list[np.ndarray],
    grid_shape: tuple[int, int],
    training: bool = False,
):
    """Fused-head forward over batched pyramid levels; returns (logits, caches)."""
    fused, fuse_cache = fuse_batch_forward(
        level_stacks, grid_shape, state.spec.patch_size, state.fusion_cfg, state.params
    )
    dropout_rng = state.rng if training and state.decoder_cfg.dropout_rate > 0 else None
    logits, dec_cache = decode_forward(fused, state.params, state.decoder_cfg, dropout_rng)
    return logits, (fuse_cache, dec_cache)


def head_backward(state: ModelState, d_logits: np.ndarray, caches) -> dict[str, np.ndarray]:
    """Parameter gradients for the full head given d(loss)/d(logits)."""
    fuse_cache, dec_cache = caches
    grads, d_fused = decode_backward(d_logits, dec_cache, state.params)
    grads.update(fuse_batch_backward(d_fused, fuse_cache))
    return grads


def infer_logits(state: ModelState, pyramid: FeaturePyramid) -> np.ndarray:
    """Grid logits for a single pyramid (eval mode)."""
    stacks = [grid[None].astype(np.float64) for _, grid in pyramid.levels]
    logits, _ = head_forward(state, stacks, pyramid.grid_shape, training=False)
    return logits[0]


def infer_image(state: ModelState, image: ImagePlane) -> ProbabilityMap:
    """Single-pass inference: encode, fuse, decode, upsample, crop."""
    pyramid = bb.encode(image, state.spec)
    logits = infer_logits(state, pyramid)
    cell = state.fusion_cfg.target_cell_pixels or state.spec.patch_size
    return to_pixel_probabilities(
        logits,
        source_shape=pyramid.source_shape,
        spacing_um=image.spacing_um,
        cell_pixels=cell,
        pad_offset=pyramid.pad_offset,
    )
