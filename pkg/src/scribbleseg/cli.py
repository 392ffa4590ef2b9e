"""Batch command-line entry points: train, infer, eval, viz, serve.

Configuration can come from a TOML or JSON file (--config) mirroring the
config dataclasses in sections [backbone], [fusion], [decoder], [loss],
[train], [tiler]; explicit command-line flags override file values, which
override built-in defaults.

Exit codes: 0 ok, 2 usage, 3 data-contract violation, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import featviz
from .backbone import BackboneSpec
from .decoder import DecoderConfig, argmax_mask
from .errors import ScribblesegError
from .fusion import FusionConfig
from .images import load_image, normalize_plane
from .loss import IGNORE_INDEX, LossConfig
from .metrics import evaluate, write_report
from .model import init_model
from .tiler import (
    TileLayout,
    save_label_mask_png,
    save_probability_tiff,
    tiled_inference,
    tv_smooth,
)
from .trainer import (
    Roi,
    ScribbleMask,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONTRACT = 3
EXIT_RUNTIME = 4


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ScribblesegError(f"config file not found: {p}")
    text = p.read_text()
    if p.suffix in (".toml", ".tml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def build_configs(file_cfg: dict, args) -> tuple[BackboneSpec, FusionConfig, DecoderConfig, LossConfig, TrainConfig, dict]:
    backbone_cfg = dict(file_cfg.get("backbone", {}))
    if getattr(args, "provider", None):
        backbone_cfg["provider_id"] = args.provider
    spec = BackboneSpec.from_dict(backbone_cfg)
    fusion = FusionConfig.from_dict(file_cfg.get("fusion", {}))
    decoder = DecoderConfig.from_dict(file_cfg.get("decoder", {}))
    loss = LossConfig.from_dict(file_cfg.get("loss", {}))
    train_cfg_d = dict(file_cfg.get("train", {}))
    if getattr(args, "seed", None) is not None:
        train_cfg_d["seed"] = args.seed
    train_cfg = TrainConfig.from_dict(train_cfg_d)
    tiler_cfg = dict(file_cfg.get("tiler", {}))
    for flag, key in (("tile_size", "tile_size"), ("overlap", "overlap_fraction"),
                      ("tv_weight", "tv_weight")):
        value = getattr(args, flag, None)
        if value is not None:
            tiler_cfg[key] = value
    return spec, fusion, decoder, loss, train_cfg, tiler_cfg


def _find_label_pairs(data_dir: Path) -> list[tuple[Path, Path]]:
    images = sorted(
        p for p in data_dir.iterdir()
        if p.suffix.lower() in (".png", ".tif", ".tiff") and not p.stem.endswith("_labels")
    )
    if not images:
        raise ScribblesegError(f"no images found in {data_dir}")
    pairs = []
    for img in images:
        label = img.with_name(f"{img.stem}_labels{img.suffix}")
        if not label.exists():
            raise ScribblesegError(f"missing label file for {img.name}: expected {label.name}")
        pairs.append((img, label))
    return pairs


def cmd_train(args) -> int:
    file_cfg = load_config_file(args.config)
    spec, fusion, decoder_cfg, loss_cfg, train_cfg, _ = build_configs(file_cfg, args)
    pairs = _find_label_pairs(Path(args.data))

    rois = []
    num_classes = decoder_cfg.num_classes
    shape = None
    for img_path, label_path in pairs:
        plane = normalize_plane(load_image(img_path, spacing_um=args.spacing_um))
        labels = load_image(label_path).data.astype(np.uint8)
        if labels.shape != plane.shape:
            raise ScribblesegError(
                f"{label_path.name}: label shape {labels.shape} != image {plane.shape}"
            )
        if shape is None:
            shape = plane.shape
        elif plane.shape != shape:
            raise ScribblesegError(
                f"{img_path.name}: all training images must share one size, "
                f"got {plane.shape} vs {shape}"
            )
        present = np.unique(labels[labels != IGNORE_INDEX])
        num_classes = max(num_classes, int(present.max()) + 1 if present.size else 0)
        rois.append(
            Roi(image=plane, scribbles=ScribbleMask(labels, args.spacing_um), origin=(0, 0))
        )

    if num_classes > decoder_cfg.num_classes:
        decoder_cfg = DecoderConfig(
            num_classes=num_classes,
            hidden_sizes=decoder_cfg.hidden_sizes,
            dropout_rate=decoder_cfg.dropout_rate,
        )
    state = init_model(spec, fusion, decoder_cfg, seed=train_cfg.seed)
    epochs = args.epochs if args.epochs is not None else train_cfg.epochs_full
    trace = train(state, rois, train_cfg, loss_cfg, epochs)
    save_checkpoint(state, args.out, train_cfg, loss_cfg)

    trace_path = Path(args.out).with_suffix(".loss.csv")
    with open(trace_path, "w") as f:
        f.write("epoch,loss\n")
        for i, value in enumerate(trace):
            f.write(f"{i},{value:.8f}\n")
    print(f"trained {epochs} epochs on {len(rois)} images -> {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    state, train_cfg, _ = load_checkpoint(args.checkpoint)
    file_cfg = load_config_file(args.config)
    _, _, _, _, _, tiler_cfg = build_configs(file_cfg, args)
    image = load_image(args.image, spacing_um=args.spacing_um)
    layout = TileLayout(
        image_shape=image.shape,
        tile_size=int(tiler_cfg.get("tile_size", 512)),
        overlap_fraction=float(tiler_cfg.get("overlap_fraction", 0.5)),
    )
    prob = tiled_inference(image, state, layout, eps_blend=float(tiler_cfg.get("eps_blend", 0.01)))
    prob = tv_smooth(prob, float(tiler_cfg.get("tv_weight", 0.0)))
    mask = argmax_mask(prob)

    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    table = [{"id": c, "name": f"class{c}", "color": _auto_color(c)}
             for c in range(state.decoder_cfg.num_classes)]
    save_label_mask_png(mask, f"{prefix}_mask.png", table, f"{prefix}_mask.json")
    save_probability_tiff(prob, f"{prefix}_prob.tif")
    print(f"wrote {prefix}_mask.png, {prefix}_prob.tif ({len(layout.origins)} tiles)")
    return EXIT_OK


def _auto_color(class_id: int) -> str:
    palette = ["#000000", "#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
               "#ff7f00", "#ffff33", "#a65628", "#f781bf"]
    return palette[class_id % len(palette)]


def cmd_eval(args) -> int:
    pred = load_image(args.pred).data.astype(np.uint8)
    gt = load_image(args.gt).data.astype(np.uint8)
    present = sorted(
        set(np.unique(pred)) | set(np.unique(gt[gt != IGNORE_INDEX]))
    )
    classes = [int(c) for c in present if c != IGNORE_INDEX]
    report = evaluate(pred, gt, classes, spacing_um=args.spacing_um)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, csv_path=out.with_suffix(".csv"), json_path=out.with_suffix(".json"))
    print(report.to_csv())
    return EXIT_OK


def cmd_viz(args) -> int:
    file_cfg = load_config_file(args.config)
    spec, _, _, _, _, _ = build_configs(file_cfg, args)
    image = load_image(args.image, spacing_um=args.spacing_um)
    layers = [args.layer] if args.layer is not None else list(spec.tap_layers)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for layer in layers:
        rgb, degenerate = featviz.pca_rgb_roi(image, spec, layer, upsample_to_pixels=True)
        path = out_dir / f"pca_layer{layer:02d}.png"
        featviz.save_pca_png(rgb, path)
        note = " (degenerate)" if degenerate else ""
        print(f"wrote {path}{note}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.store)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scribbleseg",
        description="Scribble-supervised segmentation on frozen transformer features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML/JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--provider", help="backbone provider id")
        p.add_argument("--spacing-um", dest="spacing_um", type=float, default=1.0)

    p_train = sub.add_parser("train", help="train on dense image/label pairs")
    common(p_train)
    p_train.add_argument("--data", required=True, help="directory of <stem>.png + <stem>_labels.png")
    p_train.add_argument("--out", required=True, help="output checkpoint path")
    p_train.add_argument("--epochs", type=int, default=None)

    p_infer = sub.add_parser("infer", help="tiled inference with a checkpoint")
    common(p_infer)
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--image", required=True)
    p_infer.add_argument("--out", required=True, help="output prefix")
    p_infer.add_argument("--tile-size", dest="tile_size", type=int, default=None)
    p_infer.add_argument("--overlap", type=float, default=None)
    p_infer.add_argument("--tv-weight", dest="tv_weight", type=float, default=None)

    p_eval = sub.add_parser("eval", help="metrics report for a prediction vs ground truth")
    common(p_eval)
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--out", required=True, help="report path (writes .csv and .json)")

    p_viz = sub.add_parser("viz", help="PCA feature maps per tap layer")
    common(p_viz)
    p_viz.add_argument("--image", required=True)
    p_viz.add_argument("--out", required=True, help="output directory")
    p_viz.add_argument("--layer", type=int, default=None)

    p_serve = sub.add_parser("serve", help="run the interactive session service")
    common(p_serve)
    p_serve.add_argument("--store", required=True, help="session store directory")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8642)

    return parser


COMMANDS = {
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "viz": cmd_viz,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ScribblesegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
