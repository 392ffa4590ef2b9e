"""Per-cell MLP decoding of fused features and pixel-grid probability output.

The MLP is applied identically at every grid position (1x1-convolution
behavior): hidden layers with ReLU, a linear output layer producing one logit
per class. `to_pixel_probabilities` turns a logits grid into per-pixel class
probabilities on the original (unpadded) pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError
from .ops import bilinear_resize, relu, relu_backward, softmax

# parameter count of a base-size (768-wide, 12-block) patch-16 transformer
# encoder; reference for the lightweight-head budget check
BASE_BACKBONE_PARAMS = (
    3 * 16 * 16 * 768 + 768                       # patch embedding
    + 197 * 768                                   # position embedding (224px grid + 1)
    + 12 * (
        768 * 3 * 768 + 3 * 768                   # qkv
        + 768 * 768 + 768                         # attention projection
        + 768 * 3072 + 3072 + 3072 * 768 + 768    # mlp
        + 4 * 768                                 # norms
    )
    + 2 * 768                                     # final norm
)

LIGHTWEIGHT_BUDGET_FRACTION = 0.01


@dataclass(frozen=True)
class DecoderConfig:
    """Compact MLP head configuration."""

    num_classes: int = 2
    hidden_sizes: tuple[int, ...] = (256,)
    dropout_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigurationError(f"hidden sizes must be >= 1: {self.hidden_sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "hidden_sizes": list(self.hidden_sizes),
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderConfig":
        return cls(
            num_classes=int(d.get("num_classes", 2)),
            hidden_sizes=tuple(d.get("hidden_sizes", (256,))),
            dropout_rate=float(d.get("dropout_rate", 0.0)),
        )

    def layer_sizes(self, in_channels: int) -> list[tuple[int, int]]:
        dims = [in_channels, *self.hidden_sizes, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel class probabilities; every pixel's class vector sums to 1."""

    data: np.ndarray  # (H, W, K)
    spacing_um: float = 1.0

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel integer class labels."""

    data: np.ndarray  # (H, W) uint8
    spacing_um: float = 1.0


def init_decoder_params(
    cfg: DecoderConfig, in_channels: int, seed: int = 0
) -> dict[str, np.ndarray]:
    """Fan-in-scaled uniform weights, zero biases, deterministic given seed."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for i, (fan_in, fan_out) in enumerate(cfg.layer_sizes(in_channels)):
        bound = np.sqrt(6.0 / fan_in)
        params[f"decoder.layer{i}.w"] = rng.uniform(-bound, bound, (fan_in, fan_out))
        params[f"decoder.layer{i}.b"] = np.zeros(fan_out, dtype=np.float64)
    return params


def decode_forward(
    fused_grid: np.ndarray,
    params: dict[str, np.ndarray],
    cfg: DecoderConfig,
    dropout_rng: np.random.Generator | None = None,
):
    """Apply the MLP at every grid cell; returns (logits, cache).

    `fused_grid` is (..., rows, cols, C). Dropout is active only when a
    dropout RNG is passed (training mode) and the configured rate is > 0;
    otherwise the pass is deterministic.
    """
    n_layers = len(cfg.hidden_sizes) + 1
    if params["decoder.layer0.w"].shape[0] != fused_grid.shape[-1]:
        raise ContractError(
            f"decoder expects {params['decoder.layer0.w'].shape[0]} input channels, "
            f"got {fused_grid.shape[-1]}"
        )
    lead = fused_grid.shape[:-1]
    x = fused_grid.reshape(-1, fused_grid.shape[-1]).astype(np.float64, copy=False)
    cache = {"inputs": [], "pre": [], "drop": [], "lead": lead, "n_layers": n_layers}
    for i in range(n_layers):
        w = params[f"decoder.layer{i}.w"]
        b = params[f"decoder.layer{i}.b"]
        cache["inputs"].append(x)
        z = x @ w + b
        if i < n_layers - 1:
            cache["pre"].append(z)
            x = relu(z)
            if dropout_rng is not None and cfg.dropout_rate > 0.0:
                keep = 1.0 - cfg.dropout_rate
                mask = (dropout_rng.random(x.shape) < keep) / keep
                x = x * mask
                cache["drop"].append(mask)
            else:
                cache["drop"].append(None)
        else:
            x = z
    logits = x.reshape(*lead, cfg.num_classes)
    return logits, cache


def decode_backward(d_logits: np.ndarray, cache, params: dict[str, np.ndarray]):
    """Gradients of `decode_forward` w.r.t. decoder weights and fused input."""
    n_layers = cache["n_layers"]
    g = d_logits.reshape(-1, d_logits.shape[-1])
    grads: dict[str, np.ndarray] = {}
    for i in reversed(range(n_layers)):
        x = cache["inputs"][i]
        w = params[f"decoder.layer{i}.w"]
        grads[f"decoder.layer{i}.w"] = x.T @ g
        grads[f"decoder.layer{i}.b"] = g.sum(axis=0)
        g = g @ w.T
        if i > 0:
            mask = cache["drop"][i - 1]
            if mask is not None:
                g = g * mask
            g = relu_backward(g, cache["pre"][i - 1])
    d_fused = g.reshape(*cache["lead"], -1)
    return grads, d_fused


def decode(fused_grid: np.ndarray, params: dict[str, np.ndarray], cfg: DecoderConfig) -> np.ndarray:
    """Inference-only decode: (rows, cols, C) -> (rows, cols, K) logits."""
    logits, _ = decode_forward(fused_grid, params, cfg)
    return logits


def to_pixel_probabilities(
    logits: np.ndarray,
    source_shape: tuple[int, int],
    spacing_um: float,
    cell_pixels: float,
    pad_offset: tuple[int, int] | None = None,
) -> ProbabilityMap:
    """Softmax, bilinear upsample to the padded pixel grid, crop, renormalize.

    `pad_offset` defaults to the symmetric pad-to-multiple placement.
    """
    if not np.all(np.isfinite(logits)):
        raise ContractError("logits contain non-finite values")
    rows, cols, _ = logits.shape
    probs = softmax(logits.astype(np.float64), axis=-1)
    padded_h = int(round(rows * cell_pixels))
    padded_w = int(round(cols * cell_pixels))
    up = bilinear_resize(probs, (padded_h, padded_w))
    h, w = source_shape
    if pad_offset is None:
        pad_offset = ((padded_h - h) // 2, (padded_w - w) // 2)
    top, left = pad_offset
    cropped = up[top : top + h, left : left + w, :]
    cropped = cropped / cropped.sum(axis=-1, keepdims=True)
    return ProbabilityMap(data=cropped, spacing_um=spacing_um)


def argmax_mask(prob: ProbabilityMap) -> LabelMask:
    """Per-pixel argmax; ties break toward the lowest class index."""
    labels = np.argmax(prob.data, axis=-1).astype(np.uint8)
    return LabelMask(data=labels, spacing_um=prob.spacing_um)


def decoder_param_count(cfg: DecoderConfig, in_channels: int) -> int:
    return sum(fi * fo + fo for fi, fo in cfg.layer_sizes(in_channels))


def head_param_count(params: dict[str, np.ndarray]) -> int:
    return int(sum(int(np.prod(a.shape)) for a in params.values()))


def assert_lightweight(params: dict[str, np.ndarray]) -> int:
    """Check the trainable head stays under 1% of a base-size backbone.

    Returns the head parameter count; raises ConfigurationError when the
    budget is exceeded.
    """
    n = head_param_count(params)
    budget = int(BASE_BACKBONE_PARAMS * LIGHTWEIGHT_BUDGET_FRACTION)
    if n >= budget:
        raise ConfigurationError(
            f"trainable head has {n} parameters, exceeding the lightweight "
            f"budget of {budget} ({LIGHTWEIGHT_BUDGET_FRACTION:.0%} of {BASE_BACKBONE_PARAMS})"
        )
    return n
