"""Look at what the frozen backbone sees, before any training happens.

We generate a two-texture image with a wavy boundary, encode it with the
synthetic texture provider, and project each tap layer's tokens onto their
top-3 principal components as RGB. The anatomy (here: the texture regions)
should already be visible in the feature space -- that is the whole premise
of training only a lightweight head on top.

Run:  python demos/01_feature_pca.py
Outputs land in demos/out/.
"""

from pathlib import Path

from scribbleseg import BackboneSpec, two_texture_benchmark
from scribbleseg.featviz import pca_rgb_roi, save_montage_png, save_pca_png

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

bench = two_texture_benchmark(size=512, seed=0)
spec = BackboneSpec()  # synthetic provider, taps at blocks 3/6/9/12

print(f"image {bench.image.shape}, {bench.num_classes} texture classes")
for layer in spec.tap_layers:
    rgb, degenerate = pca_rgb_roi(bench.image, spec, layer, upsample_to_pixels=True)
    path = out_dir / f"pca_layer{layer:02d}.png"
    save_pca_png(rgb, path)
    print(f"  tap layer {layer:2d} -> {path}" + ("  (degenerate)" if degenerate else ""))

# side-by-side of the input and the deepest tap, for a report figure
rgb, _ = pca_rgb_roi(bench.image, spec, spec.tap_layers[-1], upsample_to_pixels=True)
save_montage_png(bench.image, rgb, out_dir / "pca_montage.png")
print(f"montage -> {out_dir / 'pca_montage.png'}")
