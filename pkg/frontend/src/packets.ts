/** Media packet parsing and frame reassembly (the 55-byte wire header). */

export const MAGIC = 0x5643;
export const VERSION = 1;
export const HEADER_SIZE = 55;

export const FLAG_KEYFRAME = 0x01;
export const FLAG_MARKER = 0x02;
export const FLAG_LAST = 0x04;

export interface FramePacket {
  flags: number;
  frameSeq: number;
  fragIndex: number;
  fragCount: number;
  renderTimestampUs: bigint;
  appliedControlSeq: number;
  renderPose: number[]; // px, py, pz, qx, qy, qz, qw
  codecId: number;
  payload: Uint8Array;
}

export interface DeliveredFrame {
  frameSeq: number;
  keyframe: boolean;
  marker: boolean;
  codecId: number;
  renderTimestampUs: bigint;
  appliedControlSeq: number;
  renderPose: number[];
  payload: Uint8Array;
}

export class CorruptPacket extends Error {}

export function parsePacket(raw: Uint8Array): FramePacket {
  if (raw.length < HEADER_SIZE) throw new CorruptPacket(`packet of ${raw.length} bytes is shorter than the header`);
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const magic = view.getUint16(0);
  const version = view.getUint8(2);
  if (magic !== MAGIC) throw new CorruptPacket(`bad magic 0x${magic.toString(16)}`);
  if (version !== VERSION) throw new CorruptPacket(`unsupported version ${version}`);
  const flags = view.getUint8(3);
  const frameSeq = view.getUint32(4);
  const fragIndex = view.getUint16(8);
  const fragCount = view.getUint16(10);
  if (fragIndex >= fragCount) throw new CorruptPacket(`frag_index ${fragIndex} >= frag_count ${fragCount}`);
  const renderTimestampUs = view.getBigUint64(12);
  const appliedControlSeq = view.getUint32(20);
  const renderPose: number[] = [];
  for (let i = 0; i < 7; i++) renderPose.push(view.getFloat32(24 + 4 * i));
  const codecId = view.getUint8(52);
  const payloadLen = view.getUint16(53);
  const payload = raw.subarray(HEADER_SIZE);
  if (payload.length !== payloadLen) {
    throw new CorruptPacket(`payload is ${payload.length} bytes, header says ${payloadLen}`);
  }
  return { flags, frameSeq, fragIndex, fragCount, renderTimestampUs, appliedControlSeq, renderPose, codecId, payload };
}

interface Partial {
  fragCount: number;
  first: FramePacket;
  frags: Map<number, Uint8Array>;
}

/** In-order frame delivery with duplicate, stale and eviction handling. */
export class ReassemblyBuffer {
  private pending = new Map<number, Partial>();
  private lastDelivered: number | null = null;
  staleDropped = 0;
  evicted = 0;
  duplicates = 0;

  constructor(readonly maxPending = 4) {}

  add(packet: FramePacket): DeliveredFrame | null {
    const seq = packet.frameSeq;
    if (this.lastDelivered !== null && seq <= this.lastDelivered) {
      this.staleDropped++;
      return null;
    }
    let part = this.pending.get(seq);
    if (part === undefined) {
      if (this.pending.size >= this.maxPending) {
        const victim = Math.min(...this.pending.keys());
        this.pending.delete(victim);
        this.evicted++;
      }
      part = { fragCount: packet.fragCount, first: packet, frags: new Map() };
      this.pending.set(seq, part);
    } else if (packet.fragCount !== part.fragCount) {
      return null;
    }
    if (part.frags.has(packet.fragIndex)) {
      this.duplicates++;
      return null;
    }
    part.frags.set(packet.fragIndex, packet.payload);
    if (part.frags.size < part.fragCount) return null;

    let total = 0;
    for (const f of part.frags.values()) total += f.length;
    const payload = new Uint8Array(total);
    let off = 0;
    for (let i = 0; i < part.fragCount; i++) {
      const frag = part.frags.get(i)!;
      payload.set(frag, off);
      off += frag.length;
    }
    this.pending.delete(seq);
    this.lastDelivered = seq;
    for (const s of [...this.pending.keys()]) {
      if (s <= seq) {
        this.pending.delete(s);
        this.evicted++;
      }
    }
    const head = part.first;
    return {
      frameSeq: seq,
      keyframe: (head.flags & FLAG_KEYFRAME) !== 0,
      marker: (head.flags & FLAG_MARKER) !== 0,
      codecId: head.codecId,
      renderTimestampUs: head.renderTimestampUs,
      appliedControlSeq: head.appliedControlSeq,
      renderPose: head.renderPose,
      payload,
    };
  }
}
