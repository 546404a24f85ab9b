/** Lossless frame codecs and the fixed BT.601 pixel conversions.
 *
 * Byte-for-byte the same semantics as the server pipeline: DELTA keyframes
 * are raw I420, delta frames are a mod-256 byte difference run-length coded
 * as (count, value) pairs, and the I420-to-RGBA display conversion uses the
 * frozen 16.16 fixed-point constants, so decoded pixels match the reference
 * decoder exactly.
 */

export const CODEC_RAW = 0;
export const CODEC_DELTA = 1;

export class CodecError extends Error {}
export class NeedsKeyframe extends CodecError {}
export class CorruptFrame extends CodecError {}

export interface I420Frame {
  width: number;
  height: number;
  frameSeq: number;
  data: Uint8Array; // Y plane, U plane, V plane
}

export function i420Size(width: number, height: number): number {
  return width * height + 2 * (width >> 1) * (height >> 1);
}

export function rleDecode(data: Uint8Array, expectedLen: number): Uint8Array {
  if (data.length % 2 !== 0) throw new CorruptFrame("RLE stream has a dangling half pair");
  const out = new Uint8Array(expectedLen);
  let pos = 0;
  for (let i = 0; i < data.length; i += 2) {
    const count = data[i];
    if (count === 0) throw new CorruptFrame("RLE run of length zero");
    if (pos + count > expectedLen) throw new CorruptFrame("RLE expands past the frame size");
    out.fill(data[i + 1], pos, pos + count);
    pos += count;
  }
  if (pos !== expectedLen) throw new CorruptFrame(`RLE expands to ${pos} bytes, expected ${expectedLen}`);
  return out;
}

/** Stateful decoder: keyframes reset the chain, deltas add onto the previous frame. */
export class Decoder {
  private prev: Uint8Array | null = null;
  private readonly expected: number;

  constructor(readonly width: number, readonly height: number) {
    this.expected = i420Size(width, height);
  }

  decode(frameSeq: number, keyframe: boolean, payload: Uint8Array): I420Frame {
    let cur: Uint8Array;
    if (keyframe) {
      if (payload.length !== this.expected) {
        throw new CorruptFrame(`keyframe payload is ${payload.length} bytes, expected ${this.expected}`);
      }
      cur = payload.slice();
    } else {
      if (this.prev === null) throw new NeedsKeyframe("first frame of a delta stream must be a keyframe");
      const diff = rleDecode(payload, this.expected);
      cur = new Uint8Array(this.expected);
      for (let i = 0; i < this.expected; i++) cur[i] = (this.prev[i] + diff[i]) & 0xff;
    }
    this.prev = cur;
    return { width: this.width, height: this.height, frameSeq, data: cur };
  }
}

/** Decoder wrapper enforcing delta-chain continuity across delivered frames. */
export class StreamDecoder {
  private decoder: Decoder;
  private lastSeq: number | null = null;
  private synced = false;
  resyncSkips = 0;

  constructor(width: number, height: number) {
    this.decoder = new Decoder(width, height);
  }

  decode(frameSeq: number, keyframe: boolean, payload: Uint8Array): I420Frame | null {
    if (keyframe) {
      this.synced = true;
    } else if (!this.synced || this.lastSeq === null || frameSeq !== this.lastSeq + 1) {
      this.synced = false;
      this.resyncSkips++;
      return null;
    }
    const frame = this.decoder.decode(frameSeq, keyframe, payload);
    this.lastSeq = frameSeq;
    return frame;
  }
}

// 16.16 fixed-point BT.601 limited-range constants, frozen to match the wire
const IY = 76284;
const IRV = 104595;
const IGU = -25624;
const IGV = -53281;
const IBU = 132252;
const HALF = 32768;

const YR = 16829, YG = 33039, YB = 6416;
const UR = -9714, UG = -19071, UB = 28784;
const VR = 28784, VG = -24103, VB = -4681;

export function rgbToYuv(r: number, g: number, b: number): [number, number, number] {
  const y = ((YR * r + YG * g + YB * b + HALF) >> 16) + 16;
  const u = ((UR * r + UG * g + UB * b + HALF) >> 16) + 128;
  const v = ((VR * r + VG * g + VB * b + HALF) >> 16) + 128;
  return [y, u, v];
}

export function yuvToRgb(y: number, u: number, v: number): [number, number, number] {
  const c = y - 16, d = u - 128, e = v - 128;
  const clip = (x: number) => (x < 0 ? 0 : x > 255 ? 255 : x);
  return [
    clip((IY * c + IRV * e + HALF) >> 16),
    clip((IY * c + IGU * d + IGV * e + HALF) >> 16),
    clip((IY * c + IBU * d + HALF) >> 16),
  ];
}

/** Expand I420 to RGBA8 (alpha 255), identical to the reference display path. */
export function i420ToRgba(frame: I420Frame) {
  const { width: w, height: h, data } = frame;
  const cw = w >> 1;
  const ySize = w * h;
  const cSize = cw * (h >> 1);
  const out = new Uint8ClampedArray(w * h * 4);
  for (let row = 0; row < h; row++) {
    const crow = row >> 1;
    for (let col = 0; col < w; col++) {
      const c = data[row * w + col] - 16;
      const d = data[ySize + crow * cw + (col >> 1)] - 128;
      const e = data[ySize + cSize + crow * cw + (col >> 1)] - 128;
      const o = (row * w + col) * 4;
      out[o] = (IY * c + IRV * e + HALF) >> 16;
      out[o + 1] = (IY * c + IGU * d + IGV * e + HALF) >> 16;
      out[o + 2] = (IY * c + IBU * d + HALF) >> 16;
      out[o + 3] = 255;
    }
  }
  return out;
}
