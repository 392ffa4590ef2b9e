import { IGNORE, RlePayload } from "./types.js";

/** Row-major run-length encoding of the labeled pixels; unlabeled = IGNORE. */
export function rleEncode(raster: Uint8Array, width: number, height: number): RlePayload {
  if (raster.length !== width * height) {
    throw new Error(`raster length ${raster.length} != ${width}x${height}`);
  }
  const runs: Array<[number, number, number]> = [];
  let i = 0;
  while (i < raster.length) {
    const value = raster[i];
    let j = i + 1;
    while (j < raster.length && raster[j] === value) j++;
    if (value !== IGNORE) runs.push([i, j - i, value]);
    i = j;
  }
  return { width, height, runs };
}

export function rleDecode(payload: RlePayload): Uint8Array {
  const raster = new Uint8Array(payload.width * payload.height).fill(IGNORE);
  for (const [start, length, value] of payload.runs) {
    if (start < 0 || length < 0 || start + length > raster.length) {
      throw new Error(`run (${start}, ${length}) exceeds raster`);
    }
    raster.fill(value, start, start + length);
  }
  return raster;
}
