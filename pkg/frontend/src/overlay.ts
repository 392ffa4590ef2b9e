import { ClassDef, IGNORE } from "./types.js";

export function hexToRgb(hex: string): [number, number, number] {
  const h = hex.replace("#", "");
  return [
    parseInt(h.slice(0, 2), 16),
    parseInt(h.slice(2, 4), 16),
    parseInt(h.slice(4, 6), 16),
  ];
}

export function paletteFor(classes: ClassDef[]): Map<number, [number, number, number]> {
  return new Map(classes.map((c) => [c.id, hexToRgb(c.color)]));
}

/**
 * Alpha-blend class colors over the base image. Opacity 0 shows the raw
 * image, 1 pure mask colors; pixels without a class (or labeled IGNORE)
 * always show the image.
 */
export function composeOverlay(
  image: Uint8ClampedArray, // RGBA, straight from canvas
  mask: Uint8Array, // class id per pixel
  palette: Map<number, [number, number, number]>,
  opacity: number
): Uint8ClampedArray<ArrayBuffer> {
  if (image.length !== mask.length * 4) {
    throw new Error(`image RGBA length ${image.length} != 4 * mask length ${mask.length}`);
  }
  const alpha = Math.min(Math.max(opacity, 0), 1);
  const out = new Uint8ClampedArray(image.length);
  for (let i = 0; i < mask.length; i++) {
    const j = i * 4;
    const color = mask[i] === IGNORE ? undefined : palette.get(mask[i]);
    if (color === undefined) {
      out[j] = image[j];
      out[j + 1] = image[j + 1];
      out[j + 2] = image[j + 2];
    } else {
      out[j] = image[j] * (1 - alpha) + color[0] * alpha;
      out[j + 1] = image[j + 1] * (1 - alpha) + color[1] * alpha;
      out[j + 2] = image[j + 2] * (1 - alpha) + color[2] * alpha;
    }
    out[j + 3] = 255;
  }
  return out;
}

/** Scribble layer: labeled pixels in full class color, the rest transparent. */
export function scribbleLayer(
  raster: Uint8Array,
  palette: Map<number, [number, number, number]>
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(raster.length * 4);
  for (let i = 0; i < raster.length; i++) {
    const color = raster[i] === IGNORE ? undefined : palette.get(raster[i]);
    if (color !== undefined) {
      const j = i * 4;
      out[j] = color[0];
      out[j + 1] = color[1];
      out[j + 2] = color[2];
      out[j + 3] = 255;
    }
  }
  return out;
}

/**
 * Recover class ids from a decoded RGBA mask whose palette came from the
 * class table (colors are unique per class). Unknown colors map to IGNORE.
 */
export function rgbaToClassIds(
  rgba: Uint8ClampedArray,
  palette: Map<number, [number, number, number]>
): Uint8Array {
  const byColor = new Map<number, number>();
  for (const [id, [r, g, b]] of palette) {
    byColor.set((r << 16) | (g << 8) | b, id);
  }
  const n = rgba.length / 4;
  const out = new Uint8Array(n).fill(IGNORE);
  for (let i = 0; i < n; i++) {
    const j = i * 4;
    const key = (rgba[j] << 16) | (rgba[j + 1] << 8) | rgba[j + 2];
    const id = byColor.get(key);
    if (id !== undefined) out[i] = id;
  }
  return out;
}

/** Polyline points for an epoch/loss sparkline in a w x h box. */
export function sparklinePoints(losses: number[], w: number, h: number): string {
  if (losses.length === 0) return "";
  const lo = Math.min(...losses);
  const hi = Math.max(...losses);
  const span = hi - lo || 1;
  const n = losses.length;
  return losses
    .map((loss, i) => {
      const x = n === 1 ? w / 2 : (i / (n - 1)) * w;
      const y = h - ((loss - lo) / span) * h;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}
