"""Score a segmentation the same way the evaluation tables do.

Trains on the four-class benchmark for the full 50-epoch budget, predicts a
full mask, and emits the per-class DSC / IoU / recall / precision / HD95 /
ASSD report with an unweighted overall row, in CSV and JSON.

Run:  python demos/04_metrics_report.py
"""

from pathlib import Path

from scribbleseg import (
    BackboneSpec,
    DecoderConfig,
    FusionConfig,
    LossConfig,
    TrainConfig,
    evaluate,
    four_texture_benchmark,
    init_model,
    predict_mask,
    train_on_scribbles,
)
from scribbleseg.metrics import write_report

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

bench = four_texture_benchmark(size=512, seed=0, spacing_um=4.0)
state = init_model(
    BackboneSpec(), FusionConfig(proj_dim=64), DecoderConfig(num_classes=4), seed=0
)
train_on_scribbles(state, bench.image, bench.scribbles, TrainConfig(), LossConfig(), epochs=50)
prob, mask = predict_mask(bench.image, state, tv_weight=0.1)

table = [(c, f"region{c}") for c in range(4)]
report = evaluate(mask.data, bench.gt, table, spacing_um=4.0)
print(report.to_csv())
write_report(report, out_dir / "report.csv", out_dir / "report.json")
print(f"report -> {out_dir}/report.csv and report.json")
