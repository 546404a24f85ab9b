"""Regenerate the golden packet capture the frontend decode tests check against.

Writes frontend/test/golden/{capture.bin,expected_i420.bin,expected_rgba.bin,
meta.json}. capture.bin is a sequence of [u32 BE length][packet bytes]
records; the expected files are the concatenated decoder outputs of the
headless client path (StreamDecoder, then the display conversion).

Run from the repo root: python3 scripts/make_ui_golden.py
"""

import json
import math
import struct
from pathlib import Path

from vcstream import quat
from vcstream.client import pick_marker_ids
from vcstream.object_pool import ObjectKind, ObjectState, Transform
from vcstream.pixel import CodecId, Encoder, StreamDecoder, i420_to_rgba, rgba_to_i420
from vcstream.renderer import CameraIntrinsics, render, render_marker, unit_cube
from vcstream.transport import FrameMeta, packetize, serialize_packet

W, H, MTU, GOP = 128, 96, 500, 5
MARKER_SEQ = 3

OUT = Path(__file__).resolve().parent.parent / "frontend" / "test" / "golden"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    marker_id = pick_marker_ids(8)[5]
    objects = [
        ObjectState(0, "camera", ObjectKind.CAMERA, Transform((0, 0, 3), (0, 0, 0, 1), (1, 1, 1))),
        ObjectState(1, "cube", ObjectKind.MESH, Transform.identity()),
    ]
    assets = {1: unit_cube()}
    intr = CameraIntrinsics()

    enc = Encoder(CodecId.DELTA, W, H, gop_n=GOP)
    capture = bytearray()
    i420_blob = bytearray()
    rgba_blob = bytearray()
    n_frames = 7
    for seq in range(n_frames):
        if seq == MARKER_SEQ:
            frame = render_marker(marker_id, W, H, frame_seq=seq)
        else:
            angle = 0.15 * seq
            rot = quat.from_axis_angle((0, 1, 0), angle)
            pos = (3.0 * math.sin(angle), 0.2, 3.0 * math.cos(angle))
            frame = render(objects, assets, pos, rot, intr, W, H, frame_seq=seq)
        i420 = rgba_to_i420(frame)
        ef = enc.encode(i420)
        meta = FrameMeta(seq * 16_667, seq, (0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0), marker=seq == MARKER_SEQ)
        for pkt in packetize(ef, meta, MTU):
            raw = serialize_packet(pkt)
            capture += struct.pack(">I", len(raw)) + raw

    # expectations: decode the capture exactly the way the headless client would
    from vcstream.transport import ReassemblyBuffer, parse_packet

    sd = StreamDecoder(W, H)
    buf = ReassemblyBuffer()
    pos = 0
    decoded = 0
    while pos < len(capture):
        (length,) = struct.unpack_from(">I", capture, pos)
        pos += 4
        delivered = buf.add(parse_packet(bytes(capture[pos : pos + length])))
        pos += length
        if delivered is None:
            continue
        frame = sd.decode(delivered.encoded)
        assert frame is not None
        i420_blob += frame.data
        rgba_blob += i420_to_rgba(frame).data
        decoded += 1
    assert decoded == n_frames

    (OUT / "capture.bin").write_bytes(capture)
    (OUT / "expected_i420.bin").write_bytes(i420_blob)
    (OUT / "expected_rgba.bin").write_bytes(rgba_blob)
    (OUT / "meta.json").write_text(json.dumps({
        "width": W, "height": H, "frame_count": n_frames,
        "marker_seq": MARKER_SEQ, "marker_id": int(marker_id),
        "mtu": MTU, "codec": "delta",
    }, indent=2))
    print(f"wrote {OUT} (capture {len(capture)} bytes, {n_frames} frames, marker id {marker_id})")


if __name__ == "__main__":
    main()
