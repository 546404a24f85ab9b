import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcstream.frames import Frame, RGBA8, ValidationError
from vcstream.pixel import (
    CodecId, CorruptFrame, Decoder, EncodeError, EncodedFrame, Encoder,
    NeedsKeyframe, StreamDecoder, i420_to_rgba, rgb_to_yuv, rgba_to_i420,
    rle_decode, rle_encode,
)


def solid_frame(color, w=16, h=16, seq=0) -> Frame:
    arr = np.empty((h, w, 4), dtype=np.uint8)
    arr[:, :, :3] = color
    arr[:, :, 3] = 255
    return Frame.from_rgba_array(arr, seq)


def random_frame(rng, w=64, h=48, seq=0) -> Frame:
    return Frame.from_rgba_array(rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8), seq)


def random_i420(rng, w=64, h=48, seq=0) -> Frame:
    return rgba_to_i420(random_frame(rng, w, h, seq))


# ---------------------------------------------------------------------------
# color conversion


@pytest.mark.parametrize("rgb,expected", [
    ((0, 0, 0), (16, 128, 128)),
    ((255, 255, 255), (235, 128, 128)),
    ((255, 0, 0), (81, 90, 240)),
])
def test_canonical_colors_exact(rgb, expected):
    assert rgb_to_yuv(*rgb) == expected
    y, u, v = rgba_to_i420(solid_frame(rgb)).i420_planes()
    assert (y[0, 0], u[0, 0], v[0, 0]) == expected
    assert np.all(y == expected[0]) and np.all(u == expected[1]) and np.all(v == expected[2])


def test_y_plane_stays_in_limited_range():
    rng = np.random.default_rng(123)
    for _ in range(100):
        y, _, _ = random_i420(rng, 32, 24).i420_planes()
        assert y.min() >= 16 and y.max() <= 235


def test_chroma_subsampling_rounds_block_average():
    # 2x2 block of four different colors; chroma must be (sum + 2) >> 2
    colors = [(250, 10, 3), (0, 200, 50), (12, 12, 240), (99, 99, 99)]
    arr = np.empty((2, 2, 4), dtype=np.uint8)
    arr[0, 0, :3], arr[0, 1, :3], arr[1, 0, :3], arr[1, 1, :3] = colors
    arr[:, :, 3] = 255
    _, u, v = rgba_to_i420(Frame.from_rgba_array(arr)).i420_planes()
    per_pixel = [rgb_to_yuv(*c) for c in colors]
    want_u = (sum(p[1] for p in per_pixel) + 2) >> 2
    want_v = (sum(p[2] for p in per_pixel) + 2) >> 2
    assert u[0, 0] == want_u and v[0, 0] == want_v


def test_alpha_is_discarded():
    a = solid_frame((40, 80, 120))
    b_arr = a.rgba_array().copy()
    b_arr[:, :, 3] = 7
    b = Frame.from_rgba_array(b_arr)
    assert rgba_to_i420(a).data == rgba_to_i420(b).data


def test_odd_dimensions_rejected_at_frame_level():
    with pytest.raises(ValidationError):
        Frame(5, 4, RGBA8, 0, bytes(5 * 4 * 4))


def test_display_inverse_close_on_solid_colors():
    rng = np.random.default_rng(7)
    for _ in range(50):
        color = tuple(int(c) for c in rng.integers(0, 256, size=3))
        back = i420_to_rgba(rgba_to_i420(solid_frame(color))).rgba_array()[0, 0, :3]
        assert np.all(np.abs(back.astype(int) - color) <= 3)


# ---------------------------------------------------------------------------
# RLE


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=2000))
def test_rle_roundtrip(data):
    assert rle_decode(rle_encode(data), len(data)).tobytes() == data


def test_rle_long_runs():
    data = b"\x00" * 1000 + b"\x07" + b"\xff" * 300
    encoded = rle_encode(data)
    assert rle_decode(encoded, len(data)).tobytes() == data
    # 1000 zeros pack into ceil(1000/255) = 4 pairs
    assert encoded[:8] == bytes([255, 0, 255, 0, 255, 0, 235, 0])


def test_rle_corruption_detected():
    with pytest.raises(CorruptFrame):
        rle_decode(b"\x05", 5)  # dangling half pair
    with pytest.raises(CorruptFrame):
        rle_decode(b"\x00\x41", 0)  # zero-length run
    with pytest.raises(CorruptFrame):
        rle_decode(b"\x02\x41", 5)  # expands to the wrong size


# ---------------------------------------------------------------------------
# codecs


def test_raw_payload_is_verbatim():
    rng = np.random.default_rng(1)
    f = random_i420(rng, 32, 24)
    enc = Encoder(CodecId.RAW, 32, 24)
    ef = enc.encode(f)
    assert ef.is_keyframe and ef.codec_id is CodecId.RAW
    assert len(ef.payload) == 32 * 24 * 3 // 2
    assert ef.payload == f.data


@pytest.mark.parametrize("codec", [CodecId.RAW, CodecId.DELTA])
def test_roundtrip_random_frames(codec):
    rng = np.random.default_rng(2)
    enc = Encoder(codec, 48, 32, gop_n=10)
    dec = Decoder(48, 32)
    for seq in range(100):
        f = random_i420(rng, 48, 32, seq)
        out = dec.decode(enc.encode(f))
        assert out.data == f.data and out.frame_seq == seq


def test_delta_static_scene_compresses_20x():
    f = rgba_to_i420(solid_frame((30, 60, 90), 64, 48))
    enc = Encoder(CodecId.DELTA, 64, 48)
    enc.encode(f)
    ef = enc.encode(f)
    assert not ef.is_keyframe
    raw_len = 64 * 48 * 3 // 2
    assert len(ef.payload) <= 2 * ((raw_len + 254) // 255)
    assert raw_len / len(ef.payload) >= 20.0


def test_keyframe_cadence_and_force():
    rng = np.random.default_rng(3)
    enc = Encoder(CodecId.DELTA, 32, 24, gop_n=5)
    keyframes = [enc.encode(random_i420(rng, 32, 24, s)).is_keyframe for s in range(12)]
    assert keyframes == [True, False, False, False, False, True, False, False, False, False, True, False]
    ef = enc.encode(random_i420(rng, 32, 24, 12), force_keyframe=True)
    assert ef.is_keyframe


def test_dimension_mismatch_rejected():
    rng = np.random.default_rng(4)
    enc = Encoder(CodecId.DELTA, 32, 24)
    with pytest.raises(EncodeError):
        enc.encode(random_i420(rng, 64, 48))


def test_first_delta_without_keyframe_raises():
    rng = np.random.default_rng(5)
    enc = Encoder(CodecId.DELTA, 32, 24)
    enc.encode(random_i420(rng, 32, 24, 0))
    delta = enc.encode(random_i420(rng, 32, 24, 1))
    assert not delta.is_keyframe
    with pytest.raises(NeedsKeyframe):
        Decoder(32, 24).decode(delta)


def test_truncated_payloads_raise_corrupt():
    rng = np.random.default_rng(6)
    enc = Encoder(CodecId.DELTA, 32, 24)
    key = enc.encode(random_i420(rng, 32, 24, 0))
    delta = enc.encode(random_i420(rng, 32, 24, 1))
    dec = Decoder(32, 24)
    with pytest.raises(CorruptFrame):
        dec.decode(EncodedFrame(key.codec_id, 0, True, key.payload[:-3]))
    dec.decode(key)
    with pytest.raises(CorruptFrame):
        dec.decode(EncodedFrame(delta.codec_id, 1, False, delta.payload[:-1]))


def test_stream_decoder_resyncs_on_keyframe_after_loss():
    """Dropped deltas poison the chain until the next keyframe restores it."""
    rng = np.random.default_rng(7)
    frames = [random_i420(rng, 32, 24, s) for s in range(20)]
    enc = Encoder(CodecId.DELTA, 32, 24, gop_n=8)
    encoded = [enc.encode(f) for f in frames]
    sd = StreamDecoder(32, 24)
    lost = {3, 4}
    decoded_seqs = []
    for ef in encoded:
        if ef.frame_seq in lost:
            continue
        out = sd.decode(ef)
        if out is not None:
            assert out.data == frames[ef.frame_seq].data
            decoded_seqs.append(ef.frame_seq)
    # seq 5..7 are undecodable after the gap; keyframe at 8 resyncs
    assert decoded_seqs == [0, 1, 2, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19]
    assert sd.resync_skips == 3


def test_encode_decode_deterministic():
    rng = np.random.default_rng(8)
    frames = [random_i420(rng, 32, 24, s) for s in range(10)]

    def run():
        enc = Encoder(CodecId.DELTA, 32, 24, gop_n=4)
        return [enc.encode(f).payload for f in frames]

    assert run() == run()
