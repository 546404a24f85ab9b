"""Color conversion and lossless frame codecs.

RGBA frames are converted to limited-range BT.601 I420 with a fixed-point
integer formula, then compressed by one of two lossless codecs:

* RAW: the I420 bytes verbatim, every frame a keyframe.
* DELTA: keyframes carry raw bytes; other frames carry the byte-wise
  difference (mod 256) from the previous frame, run-length encoded as
  (count, value) pairs with 1 <= count <= 255. Keyframes recur every gop_n
  frames and on demand, so a receiver can always resynchronize.

Both directions are bit-exact: decode(encode(f)) == f, and the conversion
constants are frozen so golden tests hold across machines.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .frames import Frame, I420, RGBA8, ValidationError


class CodecError(Exception):
    pass


class EncodeError(CodecError):
    pass


class CorruptFrame(CodecError):
    pass


class NeedsKeyframe(CodecError):
    pass


class CodecId(IntEnum):
    RAW = 0
    DELTA = 1

    @property
    def wire_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "CodecId":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValidationError(f"unknown codec {name!r}") from None


@dataclass(eq=True)
class EncodedFrame:
    codec_id: CodecId
    frame_seq: int
    is_keyframe: bool
    payload: bytes


# BT.601 limited-range coefficients in 16.16 fixed point, rounded to nearest.
# Derived from Y' = 65.481R + 128.553G + 24.966B (+16), Cb = -37.797R
# - 74.203G + 112B (+128), Cr = 112R - 93.786G - 18.214B (+128), all over the
# 255 code range. The canonical probes come out exactly: black (16,128,128),
# white (235,128,128), red (81,90,240).
_YR, _YG, _YB = 16829, 33039, 6416
_UR, _UG, _UB = -9714, -19071, 28784
_VR, _VG, _VB = 28784, -24103, -4681
_HALF = 32768  # rounding term for the >> 16

# inverse (display) constants, same 16.16 grid:
# R = 1.164C + 1.596E, G = 1.164C - 0.391D - 0.813E, B = 1.164C + 2.018D
# with C = Y-16, D = U-128, E = V-128
_IY = 76284
_IRV = 104595
_IGU, _IGV = -25624, -53281
_IBU = 132252


def rgb_to_yuv_arrays(r, g, b):
    """Vectorized forward conversion on integer arrays (no chroma subsampling)."""
    r = np.asarray(r, dtype=np.int64)
    g = np.asarray(g, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    y = ((_YR * r + _YG * g + _YB * b + _HALF) >> 16) + 16
    u = ((_UR * r + _UG * g + _UB * b + _HALF) >> 16) + 128
    v = ((_VR * r + _VG * g + _VB * b + _HALF) >> 16) + 128
    return y, u, v


def rgb_to_yuv(r: int, g: int, b: int) -> tuple[int, int, int]:
    """Forward-convert one RGB color through the exact integer path."""
    y = ((_YR * r + _YG * g + _YB * b + _HALF) >> 16) + 16
    u = ((_UR * r + _UG * g + _UB * b + _HALF) >> 16) + 128
    v = ((_VR * r + _VG * g + _VB * b + _HALF) >> 16) + 128
    return y, u, v


def yuv_to_rgb(y: int, u: int, v: int) -> tuple[int, int, int]:
    """Approximate integer inverse used for display and as a search seed."""
    c, d, e = y - 16, u - 128, v - 128
    r = (_IY * c + _IRV * e + _HALF) >> 16
    g = (_IY * c + _IGU * d + _IGV * e + _HALF) >> 16
    b = (_IY * c + _IBU * d + _HALF) >> 16
    clip = lambda x: 0 if x < 0 else (255 if x > 255 else x)
    return clip(r), clip(g), clip(b)


def rgba_to_i420(frame: Frame) -> Frame:
    """Convert an RGBA8 frame to I420; alpha is discarded.

    Chroma planes are the rounded average of each 2x2 block's per-pixel U, V:
    (sum + 2) >> 2.
    """
    if frame.pixel_format != RGBA8:
        raise ValidationError("rgba_to_i420 expects an RGBA8 frame")
    rgba = frame.rgba_array().astype(np.int32)
    r, g, b = rgba[:, :, 0], rgba[:, :, 1], rgba[:, :, 2]

    y = ((_YR * r + _YG * g + _YB * b + _HALF) >> 16) + 16
    u = ((_UR * r + _UG * g + _UB * b + _HALF) >> 16) + 128
    v = ((_VR * r + _VG * g + _VB * b + _HALF) >> 16) + 128

    def subsample(p: np.ndarray) -> np.ndarray:
        s = p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2]
        return (s + 2) >> 2

    return Frame.from_i420_planes(
        y.astype(np.uint8), subsample(u).astype(np.uint8), subsample(v).astype(np.uint8), frame.frame_seq
    )


def i420_to_rgba(frame: Frame) -> Frame:
    """Expand an I420 frame back to RGBA8 for display (alpha = 255)."""
    if frame.pixel_format != I420:
        raise ValidationError("i420_to_rgba expects an I420 frame")
    y, u, v = (p.astype(np.int32) for p in frame.i420_planes())
    u = u.repeat(2, axis=0).repeat(2, axis=1)
    v = v.repeat(2, axis=0).repeat(2, axis=1)
    c, d, e = y - 16, u - 128, v - 128
    r = (_IY * c + _IRV * e + _HALF) >> 16
    g = (_IY * c + _IGU * d + _IGV * e + _HALF) >> 16
    b = (_IY * c + _IBU * d + _HALF) >> 16
    rgba = np.empty((frame.height, frame.width, 4), dtype=np.uint8)
    rgba[:, :, 0] = np.clip(r, 0, 255)
    rgba[:, :, 1] = np.clip(g, 0, 255)
    rgba[:, :, 2] = np.clip(b, 0, 255)
    rgba[:, :, 3] = 255
    return Frame.from_rgba_array(rgba, frame.frame_seq)


# ---------------------------------------------------------------------------
# run-length coding of delta frames


def rle_encode(data: np.ndarray | bytes) -> bytes:
    """Encode bytes as (count u8 >= 1, value u8) pairs."""
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data, dtype=np.uint8)
    if arr.size == 0:
        return b""
    boundaries = np.flatnonzero(arr[1:] != arr[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [arr.size]))
    lengths = ends - starts
    values = arr[starts]
    # split runs longer than 255 into full chunks plus a remainder
    chunks = (lengths + 254) // 255
    out_values = np.repeat(values, chunks)
    out_counts = np.full(int(chunks.sum()), 255, dtype=np.uint8)
    last_idx = np.cumsum(chunks) - 1
    remainder = lengths - (chunks - 1) * 255
    out_counts[last_idx] = remainder.astype(np.uint8)
    pairs = np.empty(out_counts.size * 2, dtype=np.uint8)
    pairs[0::2] = out_counts
    pairs[1::2] = out_values
    return pairs.tobytes()


def rle_decode(data: bytes, expected_len: int) -> np.ndarray:
    pairs = np.frombuffer(data, dtype=np.uint8)
    if pairs.size % 2:
        raise CorruptFrame("RLE stream has a dangling half pair")
    counts = pairs[0::2].astype(np.int64)
    values = pairs[1::2]
    if np.any(counts == 0):
        raise CorruptFrame("RLE run of length zero")
    total = int(counts.sum())
    if total != expected_len:
        raise CorruptFrame(f"RLE expands to {total} bytes, expected {expected_len}")
    return np.repeat(values, counts)


class Encoder:
    """Per-session stateful encoder; one instance per media pipeline."""

    def __init__(self, codec: CodecId, width: int, height: int, gop_n: int = 60):
        if gop_n < 1:
            raise ValidationError("gop_n must be >= 1")
        self.codec = CodecId(codec)
        self.width = width
        self.height = height
        self.gop_n = gop_n
        self._prev: np.ndarray | None = None
        self._since_key = 0

    def encode(self, frame: Frame, force_keyframe: bool = False) -> EncodedFrame:
        if frame.pixel_format != I420:
            raise EncodeError("encoder expects I420 frames")
        if (frame.width, frame.height) != (self.width, self.height):
            raise EncodeError(
                f"frame is {frame.width}x{frame.height}, encoder is configured for {self.width}x{self.height}"
            )
        cur = np.frombuffer(frame.data, dtype=np.uint8)
        if self.codec is CodecId.RAW:
            return EncodedFrame(CodecId.RAW, frame.frame_seq, True, frame.data)

        keyframe = force_keyframe or self._prev is None or self._since_key >= self.gop_n
        if keyframe:
            payload = frame.data
            self._since_key = 1
        else:
            diff = cur - self._prev  # uint8 arithmetic wraps mod 256
            payload = rle_encode(diff)
            self._since_key += 1
        self._prev = cur
        return EncodedFrame(CodecId.DELTA, frame.frame_seq, keyframe, payload)


class Decoder:
    """Inverse of Encoder; holds the previous frame for delta decoding."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._expected = width * height + 2 * (width // 2) * (height // 2)
        self._prev: np.ndarray | None = None

    def decode(self, ef: EncodedFrame) -> Frame:
        if ef.is_keyframe or ef.codec_id is CodecId.RAW:
            if len(ef.payload) != self._expected:
                raise CorruptFrame(f"keyframe payload is {len(ef.payload)} bytes, expected {self._expected}")
            cur = np.frombuffer(ef.payload, dtype=np.uint8)
        else:
            if self._prev is None:
                raise NeedsKeyframe("first frame of a delta stream must be a keyframe")
            diff = rle_decode(ef.payload, self._expected)
            cur = self._prev + diff
        self._prev = cur
        return Frame(self.width, self.height, I420, ef.frame_seq, cur.tobytes())


class StreamDecoder:
    """Decoder wrapper that enforces delta-chain continuity.

    After any gap in delivered frame_seq values, delta frames are undecodable:
    they would difference against the wrong base. Those frames are skipped
    (counted in resync_skips) until the next keyframe restores sync.
    """

    def __init__(self, width: int, height: int):
        self._decoder = Decoder(width, height)
        self._last_seq: int | None = None
        self._synced = False
        self.resync_skips = 0

    def decode(self, ef: EncodedFrame) -> Frame | None:
        if ef.is_keyframe:
            self._synced = True
        elif not self._synced or self._last_seq is None or ef.frame_seq != self._last_seq + 1:
            self._synced = False
            self.resync_skips += 1
            return None
        frame = self._decoder.decode(ef)
        self._last_seq = ef.frame_seq
        return frame
