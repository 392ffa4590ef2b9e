import { describe, expect, it } from "vitest";

import {
  composeOverlay,
  hexToRgb,
  paletteFor,
  rgbaToClassIds,
  scribbleLayer,
  sparklinePoints,
} from "../src/overlay.js";
import { IGNORE } from "../src/types.js";

const classes = [
  { id: 0, name: "bg", color: "#102030" },
  { id: 1, name: "fg", color: "#ff8000" },
];

function grayImage(n: number, value = 100): Uint8ClampedArray {
  const rgba = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    rgba[i * 4] = rgba[i * 4 + 1] = rgba[i * 4 + 2] = value;
    rgba[i * 4 + 3] = 255;
  }
  return rgba;
}

describe("overlay composition", () => {
  it("opacity 0 shows the raw image", () => {
    const image = grayImage(4);
    const mask = new Uint8Array([0, 1, 0, 1]);
    const out = composeOverlay(image, mask, paletteFor(classes), 0);
    expect([...out]).toEqual([...image]);
  });

  it("opacity 1 shows pure mask colors", () => {
    const image = grayImage(2);
    const mask = new Uint8Array([1, 0]);
    const out = composeOverlay(image, mask, paletteFor(classes), 1);
    expect([out[0], out[1], out[2]]).toEqual([255, 128, 0]);
    expect([out[4], out[5], out[6]]).toEqual([16, 32, 48]);
  });

  it("blends linearly in between and keeps unknown pixels as image", () => {
    const image = grayImage(2, 200);
    const mask = new Uint8Array([1, IGNORE]);
    const out = composeOverlay(image, mask, paletteFor(classes), 0.5);
    expect(out[0]).toBe(228); // (200 + 255) / 2, clamped-array rounding
    expect(out[4]).toBe(200);
  });

  it("rejects mismatched buffer sizes", () => {
    expect(() =>
      composeOverlay(grayImage(3), new Uint8Array(4), paletteFor(classes), 0.5)
    ).toThrow();
  });
});

describe("palette round trip", () => {
  it("hex parsing", () => {
    expect(hexToRgb("#ff8000")).toEqual([255, 128, 0]);
  });

  it("recovers class ids from palette-colored RGBA", () => {
    const mask = new Uint8Array([0, 1, IGNORE, 1]);
    const palette = paletteFor(classes);
    const rgba = new Uint8ClampedArray(16);
    mask.forEach((id, i) => {
      const color = id === IGNORE ? [7, 7, 7] : palette.get(id)!;
      rgba[i * 4] = color[0];
      rgba[i * 4 + 1] = color[1];
      rgba[i * 4 + 2] = color[2];
      rgba[i * 4 + 3] = 255;
    });
    expect([...rgbaToClassIds(rgba, palette)]).toEqual([0, 1, IGNORE, 1]);
  });
});

describe("scribble layer", () => {
  it("labeled pixels are opaque class colors, the rest transparent", () => {
    const raster = new Uint8Array([1, IGNORE]);
    const layer = scribbleLayer(raster, paletteFor(classes));
    expect([layer[0], layer[1], layer[2], layer[3]]).toEqual([255, 128, 0, 255]);
    expect(layer[7]).toBe(0);
  });
});

describe("sparkline", () => {
  it("maps a loss series into the box", () => {
    const points = sparklinePoints([1.0, 0.5, 0.0], 100, 20);
    expect(points).toBe("0.0,0.0 50.0,10.0 100.0,20.0");
  });

  it("handles empty and single-point series", () => {
    expect(sparklinePoints([], 100, 20)).toBe("");
    expect(sparklinePoints([0.3], 100, 20)).toContain("50.0");
  });
});
