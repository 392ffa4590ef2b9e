"""Frozen patch-token feature extraction behind a pluggable provider interface.

A provider turns a padded image into per-depth token grids. The registry ships
with a deterministic synthetic provider (local texture statistics) so the whole
pipeline is testable without pretrained weights; real transformer encoders plug
in through the same seam.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ConfigurationError, ContractError, InputError
from .images import ImagePlane, normalize_plane, pad_to_multiple

DEFAULT_TAP_LAYERS = (3, 6, 9, 12)


@dataclass(frozen=True)
class BackboneSpec:
    """Configuration of the frozen encoder.

    Attributes:
        patch_size: pixels per token edge.
        hidden_dim: token embedding width; None means provider-reported default.
        num_blocks: transformer depth (tap indices are validated against it).
        tap_layers: ordered 1-based block indices to extract.
        provider_id: registry key of the concrete provider.
    """

    patch_size: int = 16
    hidden_dim: int | None = None
    num_blocks: int = 12
    tap_layers: tuple[int, ...] = DEFAULT_TAP_LAYERS
    provider_id: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "tap_layers", tuple(int(t) for t in self.tap_layers))
        if self.patch_size < 1:
            raise ConfigurationError(f"patch_size must be >= 1, got {self.patch_size}")
        if not self.tap_layers:
            raise ConfigurationError("tap_layers must be non-empty")
        if any(t < 1 or t > self.num_blocks for t in self.tap_layers):
            raise ConfigurationError(
                f"tap_layers {self.tap_layers} out of range [1, {self.num_blocks}]"
            )
        if any(t2 <= t1 for t1, t2 in zip(self.tap_layers, self.tap_layers[1:])):
            raise ConfigurationError(f"tap_layers must be strictly increasing: {self.tap_layers}")

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "hidden_dim": self.hidden_dim,
            "num_blocks": self.num_blocks,
            "tap_layers": list(self.tap_layers),
            "provider_id": self.provider_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneSpec":
        return cls(
            patch_size=int(d.get("patch_size", 16)),
            hidden_dim=d.get("hidden_dim"),
            num_blocks=int(d.get("num_blocks", 12)),
            tap_layers=tuple(d.get("tap_layers", DEFAULT_TAP_LAYERS)),
            provider_id=str(d.get("provider_id", "synthetic")),
        )


@dataclass(frozen=True)
class FeaturePyramid:
    """Per-depth token grids plus the pixel-grid geometry they came from.

    All levels share the same rows x cols patch grid and contain patch tokens
    only. `source_shape` is the unpadded pixel size, `pad_offset` the (top,
    left) shift introduced by symmetric pad-to-multiple.
    """

    levels: tuple[tuple[int, np.ndarray], ...]
    source_shape: tuple[int, int]
    pad_offset: tuple[int, int]
    patch_size: int

    @property
    def grid_shape(self) -> tuple[int, int]:
        g = self.levels[0][1]
        return g.shape[0], g.shape[1]

    @property
    def token_dim(self) -> int:
        return self.levels[0][1].shape[2]

    @property
    def padded_shape(self) -> tuple[int, int]:
        r, c = self.grid_shape
        return r * self.patch_size, c * self.patch_size


class FeatureProvider(Protocol):
    """Read-only token-grid source; safe for concurrent encode calls."""

    token_dim: int
    expected_channels: int

    def encode_layers(
        self, pixels: np.ndarray, patch_size: int, tap_layers: tuple[int, ...]
    ) -> list[np.ndarray]:
        """Map a padded (H, W, C) image to one (rows, cols, token_dim) grid per tap."""
        ...

    def fingerprint(self) -> str:
        """Stable hash of the provider's frozen state (weights or recipe)."""
        ...


_PROVIDERS: dict[str, Callable[[BackboneSpec], FeatureProvider]] = {}


def register_provider(provider_id: str, factory: Callable[[BackboneSpec], FeatureProvider]) -> None:
    _PROVIDERS[provider_id] = factory


def get_provider(spec: BackboneSpec) -> FeatureProvider:
    try:
        factory = _PROVIDERS[spec.provider_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown backbone provider {spec.provider_id!r}; "
            f"registered: {sorted(_PROVIDERS)}"
        ) from None
    return factory(spec)


class SyntheticTextureProvider:
    """Deterministic test double for a frozen encoder.

    Each patch token is a vector of local texture statistics (mean, spread,
    oriented gradient energies, Laplacian energy, range) tiled out to
    `token_dim`. Deeper tap layers see a progressively box-smoothed copy of
    the patch, so levels differ in how local their statistics are. Tokens are
    a pure function of the pixel values.
    """

    N_STATS = 8
    DEFAULT_DIM = 32
    expected_channels = 1

    def __init__(self, spec: BackboneSpec):
        self.token_dim = int(spec.hidden_dim) if spec.hidden_dim else self.DEFAULT_DIM
        if self.token_dim < 1:
            raise ConfigurationError(f"hidden_dim must be >= 1, got {self.token_dim}")
        self.patch_size = spec.patch_size

    @staticmethod
    def _smooth_size(tap_layer: int) -> int:
        # deeper taps integrate a wider in-patch neighborhood
        return 2 * ((tap_layer - 1) // 3) + 1

    def encode_layers(self, pixels, patch_size, tap_layers):
        if pixels.ndim == 3:
            pixels = pixels.mean(axis=2)
        h, w = pixels.shape
        gy, gx = h // patch_size, w // patch_size
        blocks = (
            pixels.reshape(gy, patch_size, gx, patch_size)
            .transpose(0, 2, 1, 3)
            .astype(np.float32)
        )
        out = []
        for tap in tap_layers:
            k = self._smooth_size(tap)
            if k > 1 and patch_size > 1:
                k = min(k, patch_size)
                smoothed = uniform_filter(blocks, size=(1, 1, k, k), mode="reflect")
            else:
                smoothed = blocks
            out.append(self._patch_stats(smoothed))
        return out

    def _patch_stats(self, blocks: np.ndarray) -> np.ndarray:
        gy, gx = blocks.shape[:2]
        stats = np.empty((gy, gx, self.N_STATS), dtype=np.float32)
        stats[..., 0] = blocks.mean(axis=(2, 3))
        stats[..., 1] = blocks.std(axis=(2, 3))
        stats[..., 2] = np.abs(np.diff(blocks, axis=3)).mean(axis=(2, 3))
        stats[..., 3] = np.abs(np.diff(blocks, axis=2)).mean(axis=(2, 3))
        stats[..., 4] = np.abs(blocks[:, :, 1:, 1:] - blocks[:, :, :-1, :-1]).mean(axis=(2, 3))
        stats[..., 5] = np.abs(blocks[:, :, 1:, :-1] - blocks[:, :, :-1, 1:]).mean(axis=(2, 3))
        lap = (
            4.0 * blocks[:, :, 1:-1, 1:-1]
            - blocks[:, :, :-2, 1:-1]
            - blocks[:, :, 2:, 1:-1]
            - blocks[:, :, 1:-1, :-2]
            - blocks[:, :, 1:-1, 2:]
        )
        stats[..., 6] = np.abs(lap).mean(axis=(2, 3)) if lap.size else 0.0
        stats[..., 7] = blocks.max(axis=(2, 3)) - blocks.min(axis=(2, 3))
        reps = -(-self.token_dim // self.N_STATS)
        return np.tile(stats, (1, 1, reps))[:, :, : self.token_dim]

    def encode_patch(self, patch: np.ndarray, tap_layer: int = 1) -> np.ndarray:
        """Token for a single patch_size x patch_size pixel block."""
        if patch.ndim == 3:
            patch = patch.mean(axis=2)
        if patch.shape != (self.patch_size, self.patch_size):
            raise ContractError(
                f"patch must be {self.patch_size}x{self.patch_size}, got {patch.shape}"
            )
        grids = self.encode_layers(patch.astype(np.float32), self.patch_size, (tap_layer,))
        return grids[0][0, 0]

    def fingerprint(self) -> str:
        recipe = {
            "provider": "synthetic-texture-v1",
            "token_dim": self.token_dim,
            "patch_size": self.patch_size,
            "n_stats": self.N_STATS,
        }
        return hashlib.sha256(json.dumps(recipe, sort_keys=True).encode()).hexdigest()


register_provider("synthetic", SyntheticTextureProvider)


def backbone_hash(spec: BackboneSpec, provider: FeatureProvider | None = None) -> str:
    """Stable hash of the frozen backbone: spec + provider fingerprint."""
    provider = provider or get_provider(spec)
    payload = json.dumps(
        {"spec": spec.to_dict(), "provider": provider.fingerprint()}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def encode(image: ImagePlane, spec: BackboneSpec) -> FeaturePyramid:
    """Extract the multi-depth feature pyramid of an image.

    The image is percentile-normalized (unless already flagged normalized),
    reflect-padded symmetrically to a patch-size multiple, replicated to the
    channel count the provider expects, and handed to the provider once per
    tap layer. Class/register-style auxiliary tokens never appear: each level
    is exactly rows x cols patch tokens.
    """
    h, w = image.shape
    if h < spec.patch_size or w < spec.patch_size:
        raise InputError(
            f"image {h}x{w} is smaller than one {spec.patch_size}px patch"
        )
    provider = get_provider(spec)
    plane = normalize_plane(image)
    pixels, offset = pad_to_multiple(plane.data, spec.patch_size)
    if pixels.ndim == 2 and provider.expected_channels > 1:
        pixels = np.repeat(pixels[:, :, None], provider.expected_channels, axis=2)
    grids = provider.encode_layers(pixels, spec.patch_size, spec.tap_layers)
    rows, cols = pixels.shape[0] // spec.patch_size, pixels.shape[1] // spec.patch_size
    levels = []
    for tap, grid in zip(spec.tap_layers, grids):
        if grid.shape[:2] != (rows, cols):
            raise ContractError(
                f"provider returned grid {grid.shape[:2]} for tap {tap}, expected {(rows, cols)}"
            )
        levels.append((tap, grid))
    return FeaturePyramid(
        levels=tuple(levels),
        source_shape=(h, w),
        pad_offset=offset,
        patch_size=spec.patch_size,
    )
