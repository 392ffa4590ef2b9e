"""Scribble-driven fine-tuning of the fusion/decoder head over a frozen backbone.

Covers rasterizing pixel scribbles onto the token grid, extracting training
ROIs around scribbled regions, the AdamW training loop itself (backbone
features are computed once per ROI and cached across epochs), and the
versioned checkpoint container.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from . import backbone as bb
from .backbone import BackboneSpec
from .decoder import DecoderConfig
from .errors import CheckpointError, ConfigurationError, ContractError, SupervisionError
from .fusion import FusionConfig
from .images import ImagePlane, crop_plane, normalize_plane, pad_amounts
from .loss import IGNORE_INDEX, LossConfig, total_loss
from .model import ModelState, head_backward, head_forward

CHECKPOINT_MAGIC = b"SSWB"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ScribbleMask:
    """Sparse per-pixel labels: class ids 0..K-1, 255 = unlabeled."""

    data: np.ndarray  # (H, W) uint8
    spacing_um: float = 1.0
    provenance: str = ""

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ContractError(f"scribble mask must be 2-D, got shape {self.data.shape}")

    @property
    def labeled(self) -> np.ndarray:
        return self.data != IGNORE_INDEX

    def classes_present(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.data[self.labeled]))


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for the decoupled-weight-decay Adam loop."""

    lr: float = 5e-4
    weight_decay: float = 1e-4
    batch_size: int = 16
    epochs_full: int = 50
    epochs_interactive: int = 15
    roi_size: int = 512
    seed: int = 0
    optimizer_id: str = "adamw"

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.epochs_full, self.epochs_interactive, self.roi_size) <= 0:
            raise ConfigurationError("train config fields must be positive")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs_full": self.epochs_full,
            "epochs_interactive": self.epochs_interactive,
            "roi_size": self.roi_size,
            "seed": self.seed,
            "optimizer_id": self.optimizer_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        base = cls()
        return cls(**{k: d.get(k, getattr(base, k)) for k in base.to_dict()})


@dataclass(frozen=True)
class Roi:
    """A training window: image crop, matching scribble crop, and its origin."""

    image: ImagePlane
    scribbles: ScribbleMask
    origin: tuple[int, int]


def rasterize_scribbles(
    scribbles: ScribbleMask, cell_pixels: int, ignore_index: int = IGNORE_INDEX
) -> np.ndarray:
    """Majority-vote pixel labels onto the token grid.

    The mask is padded to a cell multiple with the same symmetric placement
    the encoder uses (padding counts as unlabeled). Each cell takes the
    majority class among its labeled pixels; unlabeled cells and exact ties
    map to the ignore value.
    """
    data = scribbles.data
    h, w = data.shape
    top, bottom = pad_amounts(h, cell_pixels)
    left, right = pad_amounts(w, cell_pixels)
    padded = np.pad(
        data, ((top, bottom), (left, right)), mode="constant", constant_values=ignore_index
    )
    gy, gx = padded.shape[0] // cell_pixels, padded.shape[1] // cell_pixels
    cells = padded.reshape(gy, cell_pixels, gx, cell_pixels)

    labeled = padded != ignore_index
    classes = sorted(int(c) for c in np.unique(padded[labeled])) if labeled.any() else []
    grid = np.full((gy, gx), ignore_index, dtype=np.int64)
    if not classes:
        return grid
    counts = np.stack(
        [(cells == c).sum(axis=(1, 3)) for c in classes], axis=0
    )  # (C, gy, gx)
    top_count = counts.max(axis=0)
    n_at_top = (counts == top_count).sum(axis=0)
    winner = np.asarray(classes, dtype=np.int64)[counts.argmax(axis=0)]
    decided = (top_count > 0) & (n_at_top == 1)
    grid[decided] = winner[decided]
    return grid


def extract_rois(image: ImagePlane, scribbles: ScribbleMask, roi_size: int) -> list[Roi]:
    """Cover every labeled pixel with roi_size x roi_size windows.

    Windows are placed greedily on the centroid of the first connected
    component of still-uncovered labeled pixels, clamped to the image; if a
    centroid window would cover none of that component (e.g. ring-shaped
    scribbles) it is re-centered on the component's first pixel. Images
    smaller than the ROI yield a single padded window.
    """
    if image.shape != scribbles.data.shape[:2]:
        raise ContractError(
            f"image {image.shape} and scribbles {scribbles.data.shape} are misaligned"
        )
    h, w = image.shape
    if h < roi_size or w < roi_size:
        return [_padded_single_roi(image, scribbles, roi_size)]

    uncovered = scribbles.labeled.copy()
    rois: list[Roi] = []
    eight = np.ones((3, 3), dtype=bool)
    while uncovered.any():
        comps, _ = ndimage.label(uncovered, structure=eight)
        comp = comps == 1
        ys, xs = np.nonzero(comp)
        cy, cx = int(round(ys.mean())), int(round(xs.mean()))
        y0 = min(max(cy - roi_size // 2, 0), h - roi_size)
        x0 = min(max(cx - roi_size // 2, 0), w - roi_size)
        covered = comp[y0 : y0 + roi_size, x0 : x0 + roi_size]
        if not covered.any():
            y0 = min(max(int(ys[0]) - roi_size // 2, 0), h - roi_size)
            x0 = min(max(int(xs[0]) - roi_size // 2, 0), w - roi_size)
        rois.append(
            Roi(
                image=crop_plane(image, y0, x0, roi_size, roi_size),
                scribbles=replace(
                    scribbles, data=scribbles.data[y0 : y0 + roi_size, x0 : x0 + roi_size]
                ),
                origin=(y0, x0),
            )
        )
        uncovered[y0 : y0 + roi_size, x0 : x0 + roi_size] = False
    return rois


def _padded_single_roi(image: ImagePlane, scribbles: ScribbleMask, roi_size: int) -> Roi:
    h, w = image.shape
    pad_y = max(roi_size - h, 0)
    pad_x = max(roi_size - w, 0)
    img = image.data
    widths = [(0, pad_y), (0, pad_x)] + [(0, 0)] * (img.ndim - 2)
    mode = "reflect" if min(h, w) > 1 else "edge"
    img_p = np.pad(img, widths, mode=mode) if (pad_y or pad_x) else img
    scr_p = np.pad(
        scribbles.data, ((0, pad_y), (0, pad_x)), mode="constant", constant_values=IGNORE_INDEX
    )
    return Roi(
        image=replace(image, data=img_p),
        scribbles=replace(scribbles, data=scr_p),
        origin=(0, 0),
    )


class AdamW:
    """Decoupled-weight-decay Adam over a flat name->array parameter dict."""

    def __init__(self, lr: float, weight_decay: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name in sorted(params):
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(params[name]))
            v = self.v.setdefault(name, np.zeros_like(params[name]))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            params[name] -= self.lr * update + self.lr * self.weight_decay * params[name]


def prepare_supervised_rois(state: ModelState, rois: list[Roi], loss_cfg: LossConfig):
    """Encode ROIs once (frozen backbone) and rasterize their supervision.

    ROIs whose supervision rasterizes to all-ignore are dropped; raises when
    nothing supervisable remains.
    """
    cell = state.fusion_cfg.target_cell_pixels or state.spec.patch_size
    prepared = []
    for roi in rois:
        grid = rasterize_scribbles(roi.scribbles, cell, loss_cfg.ignore_index)
        if not (grid != loss_cfg.ignore_index).any():
            continue
        pyramid = bb.encode(roi.image, state.spec)
        prepared.append((pyramid, grid))
    if not prepared:
        raise SupervisionError("no ROI carries any supervised cell")
    shapes = {p.grid_shape for p, _ in prepared}
    if len(shapes) != 1:
        raise ContractError(f"ROIs must share one grid shape, got {shapes}")
    return prepared


def train(
    state: ModelState,
    rois: list[Roi],
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    epochs: int,
    progress=None,
) -> list[float]:
    """Run `epochs` passes of AdamW over the ROI batches; returns the loss trace.

    Backbone features are extracted once per ROI up front. Batches are
    reshuffled every epoch with the model's RNG, so runs are deterministic
    given seed, config, and data. The trace holds one mean loss per epoch.
    `progress`, when given, is called as progress(epoch_index, mean_loss).
    """
    if epochs == 0:
        return []
    before = state.backbone_hash()
    prepared = prepare_supervised_rois(state, rois, loss_cfg)
    grid_shape = prepared[0][0].grid_shape
    n_levels = len(state.spec.tap_layers)
    features = [
        np.stack([p.levels[lvl][1].astype(np.float64) for p, _ in prepared])
        for lvl in range(n_levels)
    ]
    targets = np.stack([grid for _, grid in prepared])

    optimizer = AdamW(train_cfg.lr, train_cfg.weight_decay)
    trace: list[float] = []
    n = len(prepared)
    for epoch in range(epochs):
        order = state.rng.permutation(n)
        losses = []
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            stacks = [f[idx] for f in features]
            batch_targets = targets[idx]
            logits, caches = head_forward(state, stacks, grid_shape, training=True)
            value, d_logits, d_reg = total_loss(logits, batch_targets, state.params, loss_cfg)
            if not np.isfinite(value):
                raise ContractError(
                    f"non-finite loss {value} at epoch {epoch} (lr={train_cfg.lr}); aborting"
                )
            grads = head_backward(state, d_logits, caches)
            for name, g in d_reg.items():
                grads[name] = grads[name] + g
            optimizer.step(state.params, grads)
            losses.append(value)
        mean_loss = float(np.mean(losses))
        trace.append(mean_loss)
        state.epoch += 1
        if progress is not None:
            progress(epoch, mean_loss)
    if state.backbone_hash() != before:
        raise ContractError("backbone changed during training; it must stay frozen")
    return trace


def train_on_scribbles(
    state: ModelState,
    image: ImagePlane,
    scribbles: ScribbleMask,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    epochs: int | None = None,
    progress=None,
) -> list[float]:
    """Interactive entry point: normalize, crop ROIs around scribbles, train."""
    plane = normalize_plane(image)
    rois = extract_rois(plane, scribbles, train_cfg.roi_size)
    n_epochs = train_cfg.epochs_interactive if epochs is None else epochs
    return train(state, rois, train_cfg, loss_cfg, n_epochs, progress=progress)


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def save_checkpoint(
    state: ModelState,
    path,
    train_cfg: TrainConfig | None = None,
    loss_cfg: LossConfig | None = None,
) -> None:
    """Write the versioned container: JSON header + raw float32 weight blobs.

    Layout: magic "SSWB", u32 format version, u64 header length, UTF-8 JSON
    header, then the concatenated little-endian float32 tensors at the
    offsets recorded in the header.
    """
    names = sorted(state.params)
    tensors = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(state.params[name], dtype="<f4")
        blob = arr.tobytes()
        tensors.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f4", "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "backbone": state.spec.to_dict(),
        "backbone_hash": state.backbone_hash(),
        "fusion": state.fusion_cfg.to_dict(),
        "decoder": state.decoder_cfg.to_dict(),
        "train": train_cfg.to_dict() if train_cfg else None,
        "loss": loss_cfg.to_dict() if loss_cfg else None,
        "epoch": state.epoch,
        "rng_state": _rng_state_to_json(state.rng),
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path, expected_backbone_hash: str | None = None):
    """Read a checkpoint; returns (ModelState, train_cfg, loss_cfg).

    Refuses mismatched backbone hashes (either against `expected_backbone_hash`
    or against the hash recomputed from the stored spec) and truncated or
    malformed files.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    spec = BackboneSpec.from_dict(header["backbone"])
    actual_hash = bb.backbone_hash(spec)
    stored_hash = header.get("backbone_hash")
    if stored_hash != actual_hash:
        raise CheckpointError(
            f"{path}: backbone hash mismatch (stored {stored_hash}, recomputed {actual_hash})"
        )
    if expected_backbone_hash is not None and stored_hash != expected_backbone_hash:
        raise CheckpointError(
            f"{path}: checkpoint was trained against a different backbone"
        )

    blob_start = 16 + header_len
    total = sum(t["nbytes"] for t in header["tensors"])
    if len(raw) != blob_start + total:
        raise CheckpointError(
            f"{path}: expected {blob_start + total} bytes, file has {len(raw)}"
        )
    params: dict[str, np.ndarray] = {}
    for t in header["tensors"]:
        start = blob_start + t["offset"]
        arr = np.frombuffer(raw[start : start + t["nbytes"]], dtype=t["dtype"])
        params[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)

    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]
    state = ModelState(
        spec=spec,
        fusion_cfg=FusionConfig.from_dict(header["fusion"]),
        decoder_cfg=DecoderConfig.from_dict(header["decoder"]),
        params=params,
        epoch=int(header["epoch"]),
        rng=rng,
    )
    train_cfg = TrainConfig.from_dict(header["train"]) if header.get("train") else None
    loss_cfg = LossConfig.from_dict(header["loss"]) if header.get("loss") else None
    return state, train_cfg, loss_cfg
