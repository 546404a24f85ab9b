import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcstream.frames import Frame, I420
from vcstream.pixel import CodecId, Encoder, EncodedFrame, StreamDecoder
from vcstream.transport import (
    FLAG_KEYFRAME, FLAG_LAST, FLAG_MARKER, HEADER_SIZE, CorruptPacket, FrameMeta,
    FramePacket, OversizeError, ReassemblyBuffer, TransportError, lossy_channel,
    packetize, parse_packet, serialize_packet,
)

f32 = st.floats(allow_nan=False, allow_infinity=False, width=32)

packets = st.builds(
    FramePacket,
    flags=st.integers(0, 7),
    frame_seq=st.integers(0, 2**32 - 1),
    frag_index=st.integers(0, 99),
    frag_count=st.integers(100, 2**16 - 1),
    render_timestamp_us=st.integers(0, 2**64 - 1),
    applied_control_seq=st.integers(0, 2**32 - 1),
    render_pose=st.tuples(*[f32] * 7),
    codec_id=st.integers(0, 255),
    payload=st.binary(max_size=300),
)


def test_header_size_55_bytes():
    assert HEADER_SIZE == 55
    p = FramePacket(FLAG_LAST, 0, 0, 1, 0, 0, (0.0,) * 7, 0, b"")
    assert len(serialize_packet(p)) == 55


@settings(max_examples=300, deadline=None)
@given(packets)
def test_serialize_parse_roundtrip(p):
    assert parse_packet(serialize_packet(p)) == p


def test_packetize_split_sizes():
    ef = EncodedFrame(CodecId.RAW, 9, True, bytes(1000))
    meta = FrameMeta(123, 45, (0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0))
    pkts = packetize(ef, meta, mtu_payload=400)
    assert [len(p.payload) for p in pkts] == [400, 400, 200]
    assert [p.frag_index for p in pkts] == [0, 1, 2]
    assert all(p.frag_count == 3 for p in pkts)
    assert [bool(p.flags & FLAG_LAST) for p in pkts] == [False, False, True]
    assert all(p.flags & FLAG_KEYFRAME for p in pkts)
    assert all(p.render_timestamp_us == 123 and p.applied_control_seq == 45 for p in pkts)
    assert all(len(serialize_packet(p)) <= HEADER_SIZE + 400 for p in pkts)


def test_packetize_empty_payload():
    ef = EncodedFrame(CodecId.DELTA, 1, False, b"")
    pkts = packetize(ef, FrameMeta(0, 0, (0.0,) * 7))
    assert len(pkts) == 1
    assert pkts[0].payload == b"" and pkts[0].is_last


def test_packetize_marker_flag():
    ef = EncodedFrame(CodecId.RAW, 1, True, b"x")
    pkts = packetize(ef, FrameMeta(0, 0, (0.0,) * 7, marker=True))
    assert pkts[0].flags & FLAG_MARKER


def test_packetize_validates_mtu_and_size():
    ef = EncodedFrame(CodecId.RAW, 1, True, b"x" * 70_000)
    meta = FrameMeta(0, 0, (0.0,) * 7)
    with pytest.raises(TransportError):
        packetize(ef, meta, mtu_payload=0)
    with pytest.raises(OversizeError):
        packetize(ef, meta, mtu_payload=1)


def test_parse_rejects_garbage():
    good = serialize_packet(FramePacket(0, 1, 0, 1, 0, 0, (0.0,) * 7, 0, b"abc"))
    with pytest.raises(CorruptPacket):
        parse_packet(good[:30])
    with pytest.raises(CorruptPacket):
        parse_packet(b"\x00\x00" + good[2:])  # magic
    with pytest.raises(CorruptPacket):
        parse_packet(good[:2] + b"\x09" + good[3:])  # version
    with pytest.raises(CorruptPacket):
        parse_packet(good + b"extra")  # length mismatch
    bad_index = serialize_packet(FramePacket(0, 1, 3, 2, 0, 0, (0.0,) * 7, 0, b""))
    with pytest.raises(CorruptPacket):
        parse_packet(bad_index)


# ---------------------------------------------------------------------------
# reassembly


def frame_packets(seq, payload, keyframe=True, mtu=10):
    ef = EncodedFrame(CodecId.DELTA, seq, keyframe, payload)
    return packetize(ef, FrameMeta(seq * 1000, seq, (0.0,) * 7), mtu)


def test_reversed_fragments_still_complete():
    pkts = frame_packets(0, bytes(range(25)))
    buf = ReassemblyBuffer()
    out = None
    for p in reversed(pkts):
        res = buf.add(p)
        out = res or out
    assert out is not None
    assert out.encoded.payload == bytes(range(25))
    assert out.render_timestamp_us == 0 and out.applied_control_seq == 0


def test_duplicate_fragment_single_delivery():
    pkts = frame_packets(1, b"hello world of frames")
    buf = ReassemblyBuffer()
    deliveries = []
    for p in [pkts[0], pkts[0], *pkts[1:], pkts[-1]]:
        r = buf.add(p)
        if r:
            deliveries.append(r)
    assert len(deliveries) == 1
    assert buf.duplicates >= 1
    assert deliveries[0].encoded.payload == b"hello world of frames"


def test_incomplete_frame_dropped_on_next_keyframe():
    lossy = frame_packets(0, bytes(30), keyframe=False)[:-1]  # last fragment lost
    key = frame_packets(1, bytes(range(12)), keyframe=True)
    buf = ReassemblyBuffer()
    for p in lossy:
        assert buf.add(p) is None
    out = [buf.add(p) for p in key]
    delivered = [o for o in out if o]
    assert len(delivered) == 1 and delivered[0].encoded.is_keyframe
    assert buf.evicted == 1
    # late fragment of the abandoned frame is stale now
    late = frame_packets(0, bytes(30), keyframe=False)[-1]
    assert buf.add(late) is None
    assert buf.stale_dropped == 1


def test_frames_older_than_delivered_are_dropped():
    buf = ReassemblyBuffer()
    assert buf.add(frame_packets(5, b"x")[0]) is not None
    assert buf.add(frame_packets(3, b"y")[0]) is None
    assert buf.stale_dropped == 1


def test_pending_bounded_by_max_pending():
    buf = ReassemblyBuffer(max_pending=4)
    # open five incomplete frames; the oldest must be evicted
    for seq in range(5):
        buf.add(frame_packets(seq, bytes(40), keyframe=False, mtu=10)[0])
    assert len(buf._pending) == 4
    assert buf.evicted == 1


def test_inconsistent_frag_count_ignored():
    a = frame_packets(0, bytes(40), mtu=10)
    rogue = frame_packets(0, bytes(10), mtu=10)[0]  # frag_count 1, same seq
    buf = ReassemblyBuffer()
    buf.add(a[0])
    assert buf.add(rogue) is None
    assert buf.inconsistent == 1


# ---------------------------------------------------------------------------
# impairment simulator


def test_lossy_channel_identity_and_determinism():
    pkts = list(range(100))
    assert lossy_channel(pkts, 0.0, 0.0, seed=1) == pkts
    assert lossy_channel(pkts, 1.0, 0.0, seed=1) == []
    a = lossy_channel(pkts, 0.3, 0.3, seed=42)
    b = lossy_channel(pkts, 0.3, 0.3, seed=42)
    assert a == b
    assert lossy_channel(pkts, 0.3, 0.3, seed=43) != a
    with pytest.raises(ValueError):
        lossy_channel(pkts, 1.5, 0.0, 0)


# ---------------------------------------------------------------------------
# joint impairment run with the codec (small version of the acceptance check)


def moving_gradient(seq, w=32, h=24):
    base = (np.arange(w * h * 3 // 2, dtype=np.uint32) + 11 * seq) % 256
    return Frame(w, h, I420, seq, base.astype(np.uint8).tobytes())


def test_stream_over_lossy_channel_is_exact_from_keyframes():
    n_frames, w, h = 1000, 32, 24
    enc = Encoder(CodecId.DELTA, w, h, gop_n=30)
    frames = [moving_gradient(s, w, h) for s in range(n_frames)]
    wire = []
    originals = {}
    for f in frames:
        ef = enc.encode(f)
        originals[ef.frame_seq] = ef.payload
        wire.extend(serialize_packet(p) for p in packetize(ef, FrameMeta(f.frame_seq, 0, (0.0,) * 7), 200))

    buf = ReassemblyBuffer()
    sd = StreamDecoder(w, h)
    last_seq = -1
    decoded = keyframes_delivered = keyframes_decoded = 0
    for raw in lossy_channel(wire, 0.05, 0.05, seed=99):
        delivered = buf.add(parse_packet(raw))
        if delivered is None:
            continue
        assert delivered.encoded.frame_seq > last_seq
        last_seq = delivered.encoded.frame_seq
        assert delivered.encoded.payload == originals[delivered.encoded.frame_seq]
        keyframes_delivered += delivered.encoded.is_keyframe
        out = sd.decode(delivered.encoded)
        if out is not None:
            assert out.data == frames[delivered.encoded.frame_seq].data
            decoded += 1
            keyframes_decoded += delivered.encoded.is_keyframe
    # every keyframe that survives the channel restores the stream
    assert keyframes_delivered > 0 and keyframes_decoded == keyframes_delivered
    assert decoded > keyframes_delivered  # delta chains extend past their keyframes
