/** Marker block detection for the latency overlay (same 32x32 rule as the
 * measurement client: mean block YUV, inverse to RGB, accept only a unique
 * exact forward match; ambiguous quantizations yield null, not a guess).
 */

import { I420Frame, rgbToYuv, yuvToRgb } from "./codec.js";

export const MARKER_BLOCK = 32;
export const MARKER_BLUE = 0xa5;

function blockMean(data: Uint8Array, stride: number, size: number): number {
  let sum = 0;
  for (let row = 0; row < size; row++) {
    for (let col = 0; col < size; col++) sum += data[row * stride + col];
  }
  return Math.round(sum / (size * size));
}

export function detectMarker(frame: I420Frame): number | null {
  const { width: w, height: h, data } = frame;
  if (w < MARKER_BLOCK || h < MARKER_BLOCK) return null;
  const cw = w >> 1;
  const ySize = w * h;
  const cSize = cw * (h >> 1);
  const by = blockMean(data, w, MARKER_BLOCK);
  const bu = blockMean(data.subarray(ySize), cw, MARKER_BLOCK >> 1);
  const bv = blockMean(data.subarray(ySize + cSize), cw, MARKER_BLOCK >> 1);
  const [r0, g0, b0] = yuvToRgb(by, bu, bv);
  if (Math.abs(b0 - MARKER_BLUE) > 4) return null;
  const matches: number[] = [];
  for (let dr = -3; dr <= 3; dr++) {
    for (let dg = -3; dg <= 3; dg++) {
      const r = r0 + dr, g = g0 + dg;
      if (r < 0 || r > 255 || g < 0 || g > 255) continue;
      const [y, u, v] = rgbToYuv(r, g, MARKER_BLUE);
      if (y === by && u === bu && v === bv) matches.push(r | (g << 8));
    }
  }
  return matches.length === 1 ? matches[0] : null;
}

/** Would this id survive YUV quantization uniquely? */
export function markerIdIsExact(id: number): boolean {
  const r = id & 0xff, g = (id >> 8) & 0xff;
  const [y, u, v] = rgbToYuv(r, g, MARKER_BLUE);
  const [r0, g0] = yuvToRgb(y, u, v);
  let matches = 0;
  let found = false;
  for (let dr = -3; dr <= 3; dr++) {
    for (let dg = -3; dg <= 3; dg++) {
      const rr = r0 + dr, gg = g0 + dg;
      if (rr < 0 || rr > 255 || gg < 0 || gg > 255) continue;
      const [yy, uu, vv] = rgbToYuv(rr, gg, MARKER_BLUE);
      if (yy === y && uu === u && vv === v) {
        matches++;
        if ((rr | (gg << 8)) === id) found = true;
      }
    }
  }
  return found && matches === 1;
}

/** Deterministic allocator of distinct, exactly detectable marker ids. */
export class MarkerIdAllocator {
  private next = 0;

  take(): number {
    while (!markerIdIsExact(this.next % 65536)) this.next++;
    const id = this.next % 65536;
    this.next++;
    return id;
  }
}
