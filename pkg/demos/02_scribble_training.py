"""The interactive loop, scripted: scribble, train, correct, retrain.

A first round of sparse scribbles fine-tunes the head for 15 epochs (the
interactive budget). We then play the user's role: find the worst-classified
region, add corrective scribbles there from the ground truth, and retrain
warm-started from the current weights -- each round costs seconds while the
backbone never moves.

Run:  python demos/02_scribble_training.py
"""

import time
from pathlib import Path

import numpy as np

from scribbleseg import (
    BackboneSpec,
    DecoderConfig,
    FusionConfig,
    IGNORE_INDEX,
    LossConfig,
    ScribbleMask,
    TrainConfig,
    init_model,
    overlap_metrics,
    predict_mask,
    train_on_scribbles,
    two_texture_benchmark,
)
from scribbleseg.tiler import save_label_mask_png

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

bench = two_texture_benchmark(size=1024, seed=0)
print(f"scribbled pixels: {bench.scribble_fraction:.3%} of the image")

state = init_model(
    BackboneSpec(), FusionConfig(proj_dim=64), DecoderConfig(num_classes=2), seed=0
)
print(f"trainable head: {state.head_param_count:,} parameters (backbone frozen)")

train_cfg = TrainConfig()
loss_cfg = LossConfig()
table = [
    {"id": 0, "name": "background", "color": "#1b9e77"},
    {"id": 1, "name": "lesion", "color": "#d95f02"},
]

scribbles = bench.scribbles
for round_idx in range(2):
    t0 = time.time()
    trace = train_on_scribbles(
        state, bench.image, scribbles, train_cfg, loss_cfg, epochs=15
    )
    prob, mask = predict_mask(bench.image, state, tv_weight=0.1)
    dsc = [overlap_metrics(mask.data, bench.gt, c)[0] for c in (0, 1)]
    print(
        f"round {round_idx}: loss {trace[0]:.3f} -> {trace[-1]:.3f}, "
        f"DSC {dsc[0]:.4f}/{dsc[1]:.4f}, {time.time() - t0:.1f}s"
    )
    save_label_mask_png(mask, out_dir / f"mask_round{round_idx}.png", table)

    # emulate the user: scribble over the largest misclassified blob
    wrong = mask.data != bench.gt
    if not wrong.any():
        break
    from scipy import ndimage

    comps, n = ndimage.label(wrong)
    sizes = ndimage.sum_labels(np.ones_like(comps), comps, index=range(1, n + 1))
    worst = comps == (int(np.argmax(sizes)) + 1)
    ys, xs = np.nonzero(worst)
    cy, cx = int(ys.mean()), int(xs.mean())
    corrected = scribbles.data.copy()
    y0, y1 = max(cy - 4, 0), min(cy + 4, corrected.shape[0])
    x0, x1 = max(cx - 60, 0), min(cx + 60, corrected.shape[1])
    patch = bench.gt[y0:y1, x0:x1].astype(np.uint8)
    corrected[y0:y1, x0:x1] = patch
    scribbles = ScribbleMask(data=corrected, spacing_um=scribbles.spacing_um)
    added = (corrected != IGNORE_INDEX).sum() - (bench.scribbles.data != IGNORE_INDEX).sum()
    print(f"  user adds ~{added} corrective pixels near ({cy}, {cx})")

print(f"masks written to {out_dir}/mask_round*.png")
