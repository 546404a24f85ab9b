import { describe, expect, it } from "vitest";

import { rgbToYuv } from "../src/codec.js";
import { MarkerIdAllocator, markerIdIsExact } from "../src/markers.js";

describe("color constants parity", () => {
  it("matches the canonical conversion probes", () => {
    expect(rgbToYuv(0, 0, 0)).toEqual([16, 128, 128]);
    expect(rgbToYuv(255, 255, 255)).toEqual([235, 128, 128]);
    expect(rgbToYuv(255, 0, 0)).toEqual([81, 90, 240]);
  });
});

describe("marker id allocator", () => {
  it("knows which ids survive quantization (3, 4, 5 collapse to one color)", () => {
    expect(rgbToYuv(3, 0, 0xa5)).toEqual(rgbToYuv(4, 0, 0xa5));
    expect(rgbToYuv(4, 0, 0xa5)).toEqual(rgbToYuv(5, 0, 0xa5));
    expect(markerIdIsExact(3)).toBe(false);
    expect(markerIdIsExact(4)).toBe(false);
    expect(markerIdIsExact(0)).toBe(true);
    expect(markerIdIsExact(65535)).toBe(true);
  });

  it("emits distinct, exact ids", () => {
    const alloc = new MarkerIdAllocator();
    const ids = Array.from({ length: 50 }, () => alloc.take());
    expect(new Set(ids).size).toBe(50);
    for (const id of ids) expect(markerIdIsExact(id)).toBe(true);
  });
});
