"""Frame packetization, reassembly and a deterministic impairment simulator.

Encoded frames are split into bounded fragments, each carrying the full frame
metadata (render timestamp, echoed control seq, render pose) so any fragment
identifies its frame. The wire layout is normative and bit-exact:

    magic               u16   0x5643
    version             u8    1
    flags               u8    bit0 keyframe, bit1 marker frame, bit2 last fragment
    frame_seq           u32
    frag_index          u16
    frag_count          u16
    render_timestamp_us u64
    applied_control_seq u32
    render_pose         7 x f32  (px, py, pz, qx, qy, qz, qw)
    codec_id            u8
    payload_len         u16
    payload             payload_len bytes

All integers and floats big-endian. The header is 55 bytes.

Delivery is reliable and ordered when frames ride the signaling WebSocket;
the reassembly buffer additionally tolerates the loss and reordering a
datagram transport introduces, dropping whatever can no longer be delivered
in order and resynchronizing on keyframes.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .pixel import CodecId, EncodedFrame

MAGIC = 0x5643
VERSION = 1

FLAG_KEYFRAME = 0x01
FLAG_MARKER = 0x02
FLAG_LAST = 0x04

_HEADER = struct.Struct(">HBBIHHQI7fBH")
HEADER_SIZE = _HEADER.size  # 55

DEFAULT_MTU_PAYLOAD = 1200
DEFAULT_MAX_PENDING = 4


class TransportError(Exception):
    pass


class CorruptPacket(TransportError):
    pass


class OversizeError(TransportError):
    pass


@dataclass
class FramePacket:
    flags: int
    frame_seq: int
    frag_index: int
    frag_count: int
    render_timestamp_us: int
    applied_control_seq: int
    render_pose: tuple[float, ...]  # px, py, pz, qx, qy, qz, qw at f32 precision
    codec_id: int
    payload: bytes
    magic: int = MAGIC
    version: int = VERSION

    @property
    def is_last(self) -> bool:
        return bool(self.flags & FLAG_LAST)

    @property
    def is_keyframe(self) -> bool:
        return bool(self.flags & FLAG_KEYFRAME)

    @property
    def is_marker(self) -> bool:
        return bool(self.flags & FLAG_MARKER)


def serialize_packet(p: FramePacket) -> bytes:
    header = _HEADER.pack(
        p.magic, p.version, p.flags, p.frame_seq, p.frag_index, p.frag_count,
        p.render_timestamp_us, p.applied_control_seq, *p.render_pose,
        p.codec_id, len(p.payload),
    )
    return header + p.payload


def parse_packet(raw: bytes) -> FramePacket:
    if len(raw) < HEADER_SIZE:
        raise CorruptPacket(f"packet shorter than header ({len(raw)} bytes)")
    fields = _HEADER.unpack_from(raw)
    magic, version, flags, frame_seq, frag_index, frag_count = fields[:6]
    render_timestamp_us, applied_control_seq = fields[6], fields[7]
    pose = fields[8:15]
    codec_id, payload_len = fields[15], fields[16]
    if magic != MAGIC:
        raise CorruptPacket(f"bad magic 0x{magic:04x}")
    if version != VERSION:
        raise CorruptPacket(f"unsupported version {version}")
    if frag_index >= frag_count:
        raise CorruptPacket(f"frag_index {frag_index} >= frag_count {frag_count}")
    payload = raw[HEADER_SIZE:]
    if len(payload) != payload_len:
        raise CorruptPacket(f"payload is {len(payload)} bytes, header says {payload_len}")
    return FramePacket(
        flags=flags, frame_seq=frame_seq, frag_index=frag_index, frag_count=frag_count,
        render_timestamp_us=render_timestamp_us, applied_control_seq=applied_control_seq,
        render_pose=pose, codec_id=codec_id, payload=payload,
    )


@dataclass
class FrameMeta:
    render_timestamp_us: int
    applied_control_seq: int
    render_pose: Sequence[float]  # length 7
    marker: bool = False


def packetize(ef: EncodedFrame, meta: FrameMeta, mtu_payload: int = DEFAULT_MTU_PAYLOAD) -> list[FramePacket]:
    """Split one encoded frame into fragments of at most mtu_payload bytes.

    An empty payload still produces one fragment so the frame is delivered.
    """
    if not (1 <= mtu_payload <= 0xFFFF):
        raise TransportError(f"mtu_payload must be in [1, 65535], got {mtu_payload}")
    nfrag = max(1, -(-len(ef.payload) // mtu_payload))
    if nfrag > 0xFFFF:
        raise OversizeError(f"frame needs {nfrag} fragments, limit is 65535")
    base_flags = (FLAG_KEYFRAME if ef.is_keyframe else 0) | (FLAG_MARKER if meta.marker else 0)
    pose = tuple(float(v) for v in meta.render_pose)
    if len(pose) != 7:
        raise TransportError("render_pose must have 7 components")
    packets = []
    for i in range(nfrag):
        chunk = ef.payload[i * mtu_payload : (i + 1) * mtu_payload]
        flags = base_flags | (FLAG_LAST if i == nfrag - 1 else 0)
        packets.append(FramePacket(
            flags=flags, frame_seq=ef.frame_seq, frag_index=i, frag_count=nfrag,
            render_timestamp_us=meta.render_timestamp_us,
            applied_control_seq=meta.applied_control_seq,
            render_pose=pose, codec_id=int(ef.codec_id), payload=chunk,
        ))
    return packets


@dataclass
class DeliveredFrame:
    encoded: EncodedFrame
    marker: bool
    render_timestamp_us: int
    applied_control_seq: int
    render_pose: tuple[float, ...]


@dataclass
class _Partial:
    frag_count: int
    first: FramePacket
    frags: dict[int, bytes] = field(default_factory=dict)


class ReassemblyBuffer:
    """Reassembles fragments into frames, delivering them in frame_seq order.

    Frames older than the last delivered one are dropped, duplicates are
    ignored, and pending frames that can no longer be delivered are evicted
    (bounded by max_pending). Completing a keyframe abandons every older
    incomplete frame, matching the codec's keyframe resynchronization.
    """

    def __init__(self, max_pending: int = DEFAULT_MAX_PENDING):
        self.max_pending = max_pending
        self._pending: dict[int, _Partial] = {}
        self._last_delivered: int | None = None
        self.stale_dropped = 0
        self.evicted = 0
        self.duplicates = 0
        self.inconsistent = 0

    def add(self, packet: FramePacket) -> DeliveredFrame | None:
        seq = packet.frame_seq
        if self._last_delivered is not None and seq <= self._last_delivered:
            self.stale_dropped += 1
            return None
        part = self._pending.get(seq)
        if part is None:
            if len(self._pending) >= self.max_pending:
                victim = min(self._pending)
                del self._pending[victim]
                self.evicted += 1
            part = _Partial(frag_count=packet.frag_count, first=packet)
            self._pending[seq] = part
        elif packet.frag_count != part.frag_count:
            self.inconsistent += 1
            return None
        if packet.frag_index in part.frags:
            self.duplicates += 1
            return None
        part.frags[packet.frag_index] = packet.payload
        if len(part.frags) < part.frag_count:
            return None

        payload = b"".join(part.frags[i] for i in range(part.frag_count))
        del self._pending[seq]
        self._last_delivered = seq
        # anything older than a delivered frame can never be delivered in order
        dead = [s for s in self._pending if s <= seq]
        for s in dead:
            del self._pending[s]
        self.evicted += len(dead)
        head = part.first
        return DeliveredFrame(
            encoded=EncodedFrame(CodecId(head.codec_id), seq, head.is_keyframe, payload),
            marker=head.is_marker,
            render_timestamp_us=head.render_timestamp_us,
            applied_control_seq=head.applied_control_seq,
            render_pose=head.render_pose,
        )


def lossy_channel(packets: Iterable, loss_rate: float = 0.0, reorder_rate: float = 0.0, seed: int = 0) -> list:
    """Deterministic network impairment: drops and adjacent swaps.

    Works on any packet representation (bytes or FramePacket). Same seed,
    same input, same output.
    """
    if not (0.0 <= loss_rate <= 1.0 and 0.0 <= reorder_rate <= 1.0):
        raise ValueError("rates must be within [0, 1]")
    rng = random.Random(seed)
    kept = [p for p in packets if rng.random() >= loss_rate]
    for i in range(len(kept) - 1):
        if rng.random() < reorder_rate:
            kept[i], kept[i + 1] = kept[i + 1], kept[i]
    return kept
