import { describe, expect, it } from "vitest";

import { applyBackgroundKey } from "../src/keying.js";

describe("background keying", () => {
  it("zeroes alpha on background pixels and keeps the object opaque", () => {
    // 2x2 image: two black background pixels, one magenta, one near-black
    const rgba = new Uint8ClampedArray([
      0, 0, 0, 255,      // exact background
      255, 0, 255, 255,  // object
      2, 3, 1, 255,      // within tolerance of the background
      0, 40, 0, 255,     // outside tolerance
    ]);
    applyBackgroundKey(rgba, [0, 0, 0], 4);
    expect(rgba[3]).toBe(0);
    expect(rgba[7]).toBe(255);
    expect(rgba[11]).toBe(0);
    expect(rgba[15]).toBe(255);
  });

  it("keys against an arbitrary background color", () => {
    const rgba = new Uint8ClampedArray([10, 200, 30, 255, 10, 204, 30, 255]);
    applyBackgroundKey(rgba, [10, 200, 30], 2);
    expect(rgba[3]).toBe(0);
    expect(rgba[7]).toBe(255); // green channel off by 4 > tolerance 2
  });
});
