import { IGNORE, Point, Stroke } from "./types.js";

/**
 * Stamp a stroke onto a label raster, last writer wins.
 *
 * The brush is a disc of the stroke radius walked densely along the
 * polyline; erase strokes carry classId = IGNORE and simply write the
 * unlabeled value.
 */
export function stampStroke(
  raster: Uint8Array,
  width: number,
  height: number,
  stroke: Stroke
): void {
  if (stroke.points.length === 0) return;
  const stamp = (cx: number, cy: number) => {
    const r = Math.max(stroke.radius, 0.5);
    const r2 = r * r;
    const y0 = Math.max(Math.floor(cy - r), 0);
    const y1 = Math.min(Math.ceil(cy + r), height - 1);
    const x0 = Math.max(Math.floor(cx - r), 0);
    const x1 = Math.min(Math.ceil(cx + r), width - 1);
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) raster[y * width + x] = stroke.classId;
      }
    }
  };
  let prev = stroke.points[0];
  stamp(prev.x, prev.y);
  for (let i = 1; i < stroke.points.length; i++) {
    const next = stroke.points[i];
    const dist = Math.hypot(next.x - prev.x, next.y - prev.y);
    const steps = Math.max(1, Math.ceil(dist / Math.max(stroke.radius * 0.5, 0.5)));
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      stamp(prev.x + (next.x - prev.x) * t, prev.y + (next.y - prev.y) * t);
    }
    prev = next;
  }
}

/** Replay a stroke list onto a fresh raster (the undo-stack invariant). */
export function compositeStrokes(
  strokes: Stroke[],
  width: number,
  height: number
): Uint8Array {
  const raster = new Uint8Array(width * height).fill(IGNORE);
  for (const stroke of strokes) stampStroke(raster, width, height, stroke);
  return raster;
}

/** Class ids (ignore excluded) present in a raster. */
export function classesPresent(raster: Uint8Array): number[] {
  const seen = new Set<number>();
  for (const v of raster) {
    if (v !== IGNORE) seen.add(v);
  }
  return [...seen].sort((a, b) => a - b);
}

export function segment(points: Point[], classId: number, radius: number): Stroke {
  return { classId, radius, points };
}
