"""Raw frame container plus golden-image file helpers."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

RGBA8 = "RGBA8"
I420 = "I420"

GOLDEN_MAGIC = b"VCFR"
_GOLDEN_HEADER = struct.Struct(">4sIII")  # magic, width, height, reserved


class ValidationError(ValueError):
    pass


def frame_size(pixel_format: str, width: int, height: int) -> int:
    if pixel_format == RGBA8:
        return 4 * width * height
    if pixel_format == I420:
        return width * height + 2 * (width // 2) * (height // 2)
    raise ValidationError(f"unknown pixel format {pixel_format!r}")


@dataclass(eq=False)
class Frame:
    width: int
    height: int
    pixel_format: str
    frame_seq: int
    data: bytes

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.width % 2 or self.height % 2:
            raise ValidationError(f"frame dimensions must be positive and even, got {self.width}x{self.height}")
        expected = frame_size(self.pixel_format, self.width, self.height)
        if len(self.data) != expected:
            raise ValidationError(
                f"{self.pixel_format} {self.width}x{self.height} needs {expected} bytes, got {len(self.data)}"
            )

    def rgba_array(self) -> np.ndarray:
        """(height, width, 4) uint8 view of an RGBA8 frame."""
        if self.pixel_format != RGBA8:
            raise ValidationError("not an RGBA8 frame")
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.height, self.width, 4)

    def i420_planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(Y, U, V) uint8 plane views of an I420 frame."""
        if self.pixel_format != I420:
            raise ValidationError("not an I420 frame")
        w, h = self.width, self.height
        cw, ch = w // 2, h // 2
        buf = np.frombuffer(self.data, dtype=np.uint8)
        y = buf[: w * h].reshape(h, w)
        u = buf[w * h : w * h + cw * ch].reshape(ch, cw)
        v = buf[w * h + cw * ch :].reshape(ch, cw)
        return y, u, v

    @classmethod
    def from_rgba_array(cls, arr: np.ndarray, frame_seq: int = 0) -> "Frame":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        h, w, c = arr.shape
        if c != 4:
            raise ValidationError("expected a (h, w, 4) array")
        return cls(w, h, RGBA8, frame_seq, arr.tobytes())

    @classmethod
    def from_i420_planes(cls, y: np.ndarray, u: np.ndarray, v: np.ndarray, frame_seq: int = 0) -> "Frame":
        h, w = y.shape
        data = b"".join(np.ascontiguousarray(p, dtype=np.uint8).tobytes() for p in (y, u, v))
        return cls(w, h, I420, frame_seq, data)


def write_golden(path, frame: Frame) -> None:
    """Store an RGBA8 frame as a raw blob with a 16-byte big-endian header."""
    if frame.pixel_format != RGBA8:
        raise ValidationError("golden frames are RGBA8")
    with open(path, "wb") as f:
        f.write(_GOLDEN_HEADER.pack(GOLDEN_MAGIC, frame.width, frame.height, 0))
        f.write(frame.data)


def read_golden(path) -> Frame:
    with open(path, "rb") as f:
        header = f.read(_GOLDEN_HEADER.size)
        if len(header) != _GOLDEN_HEADER.size:
            raise ValidationError("truncated golden header")
        magic, width, height, _ = _GOLDEN_HEADER.unpack(header)
        if magic != GOLDEN_MAGIC:
            raise ValidationError(f"bad golden magic {magic!r}")
        data = f.read()
    return Frame(width, height, RGBA8, 0, data)
