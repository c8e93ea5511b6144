"""Binary PPM (P6) and PGM (P5) images with maxval 255."""

from __future__ import annotations

from pathlib import Path
from typing import Tuple, Union

import numpy as np

PathLike = Union[str, Path]


class NetpbmError(ValueError):
    """Malformed or unsupported netpbm data; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _parse_header(buf: bytes, magic: bytes) -> Tuple[int, int, int]:
    """Return ``(width, height, payload_offset)``."""
    if buf[:2] != magic:
        raise NetpbmError(f"expected magic {magic.decode()!r}, found {buf[:2]!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        # whitespace and '#' comments may separate header tokens
        while pos < len(buf) and (buf[pos:pos + 1].isspace() or buf[pos:pos + 1] == b"#"):
            if buf[pos:pos + 1] == b"#":
                end = buf.find(b"\n", pos)
                pos = len(buf) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if pos == start:
            if pos >= len(buf):
                raise NetpbmError("header ended early", pos)
            raise NetpbmError(f"expected a decimal number, found {buf[pos:pos + 1]!r}", pos)
        fields.append((int(buf[start:pos]), start))
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise NetpbmError("missing whitespace after maxval", pos)
    (width, _), (height, h_off), (maxval, m_off) = fields
    if width < 1 or height < 1:
        raise NetpbmError(f"invalid dimensions {width}x{height}", h_off)
    if maxval != 255:
        raise NetpbmError(f"unsupported maxval {maxval}, only 255 is allowed", m_off)
    return width, height, pos + 1


def _read(path_or_bytes, magic: bytes, channels: int) -> np.ndarray:
    buf = path_or_bytes if isinstance(path_or_bytes, (bytes, bytearray)) else Path(path_or_bytes).read_bytes()
    width, height, offset = _parse_header(bytes(buf), magic)
    expected = width * height * channels
    actual = len(buf) - offset
    if actual < expected:
        raise NetpbmError(f"truncated payload: expected {expected} bytes, got {actual}", offset + actual)
    data = np.frombuffer(buf, dtype=np.uint8, count=expected, offset=offset)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return data.reshape(shape).copy()


def read_ppm(source) -> np.ndarray:
    """Read a P6 file (path or raw bytes) into an ``H x W x 3`` uint8 array."""
    return _read(source, b"P6", 3)


def read_pgm(source) -> np.ndarray:
    """Read a P5 file (path or raw bytes) into an ``H x W`` uint8 array."""
    return _read(source, b"P5", 1)


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"PPM needs an H x W x 3 array, got {image.shape}")
    h, w = image.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(image, dtype=np.uint8).tobytes()


def encode_pgm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"PGM needs an H x W array, got {image.shape}")
    h, w = image.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(image, dtype=np.uint8).tobytes()


def write_ppm(path: PathLike, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(image))


def write_pgm(path: PathLike, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(image))
