// Decoder parity with the reference client on the golden packet capture:
// reassembled frames, I420 bytes and display RGBA must match bit for bit.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { i420Size, i420ToRgba, StreamDecoder } from "../src/codec.js";
import { detectMarker } from "../src/markers.js";
import { parsePacket, ReassemblyBuffer } from "../src/packets.js";

const GOLDEN = join(dirname(fileURLToPath(import.meta.url)), "golden");

interface Meta {
  width: number;
  height: number;
  frame_count: number;
  marker_seq: number;
  marker_id: number;
}

function loadCapture(): Uint8Array[] {
  const blob = readFileSync(join(GOLDEN, "capture.bin"));
  const packets: Uint8Array[] = [];
  let pos = 0;
  while (pos < blob.length) {
    const len = blob.readUInt32BE(pos);
    pos += 4;
    packets.push(new Uint8Array(blob.subarray(pos, pos + len)));
    pos += len;
  }
  return packets;
}

describe("golden capture decode parity", () => {
  const meta = JSON.parse(readFileSync(join(GOLDEN, "meta.json"), "utf-8")) as Meta;
  const expectedI420 = readFileSync(join(GOLDEN, "expected_i420.bin"));
  const expectedRgba = readFileSync(join(GOLDEN, "expected_rgba.bin"));

  it("decodes every frame pixel-identical to the reference decoder", () => {
    const packets = loadCapture();
    const buf = new ReassemblyBuffer();
    const decoder = new StreamDecoder(meta.width, meta.height);
    const frameBytes = i420Size(meta.width, meta.height);
    const rgbaBytes = meta.width * meta.height * 4;

    let decoded = 0;
    let markerSeen: number | null = null;
    for (const raw of packets) {
      const delivered = buf.add(parsePacket(raw));
      if (delivered === null) continue;
      const frame = decoder.decode(delivered.frameSeq, delivered.keyframe, delivered.payload);
      expect(frame).not.toBeNull();
      const wantI420 = expectedI420.subarray(decoded * frameBytes, (decoded + 1) * frameBytes);
      expect(Buffer.from(frame!.data).equals(wantI420)).toBe(true);

      const rgba = i420ToRgba(frame!);
      const wantRgba = expectedRgba.subarray(decoded * rgbaBytes, (decoded + 1) * rgbaBytes);
      expect(Buffer.from(rgba.buffer, rgba.byteOffset, rgba.byteLength).equals(wantRgba)).toBe(true);

      if (delivered.marker) {
        expect(delivered.frameSeq).toBe(meta.marker_seq);
        markerSeen = detectMarker(frame!);
      }
      decoded++;
    }
    expect(decoded).toBe(meta.frame_count);
    expect(markerSeen).toBe(meta.marker_id);
    expect(decoder.resyncSkips).toBe(0);
  });

  it("keeps fragment order even when packets arrive reversed per frame", () => {
    const packets = loadCapture();
    // group by frame, reverse fragments inside each frame
    const groups = new Map<number, Uint8Array[]>();
    const order: number[] = [];
    for (const raw of packets) {
      const p = parsePacket(raw);
      if (!groups.has(p.frameSeq)) {
        groups.set(p.frameSeq, []);
        order.push(p.frameSeq);
      }
      groups.get(p.frameSeq)!.push(raw);
    }
    const buf = new ReassemblyBuffer();
    const decoder = new StreamDecoder(meta.width, meta.height);
    let decoded = 0;
    for (const seq of order) {
      for (const raw of groups.get(seq)!.reverse()) {
        const delivered = buf.add(parsePacket(raw));
        if (delivered === null) continue;
        expect(decoder.decode(delivered.frameSeq, delivered.keyframe, delivered.payload)).not.toBeNull();
        decoded++;
      }
    }
    expect(decoded).toBe(meta.frame_count);
  });
});
