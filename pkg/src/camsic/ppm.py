"""Binary PPM (P6, 8-bit) image I/O, the interchange format for the CLI."""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments between header tokens
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated PPM header")
    return data[start:pos], pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse P6 bytes into a float32 [3,H,W] image scaled to [0,1]."""
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM (magic {data[:2]!r})")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"bad PPM header token {tok!r}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM supported (maxval {maxval})")
    if width <= 0 or height <= 0:
        raise FormatError("non-positive PPM extents")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    pixels = data[pos:pos + need]
    if len(pixels) < need:
        raise FormatError("PPM pixel data truncated")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)


def encode_ppm(img: np.ndarray) -> bytes:
    """Serialize a float32 [3,H,W] image in [0,1] as binary P6."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise FormatError("expected [3,H,W] image")
    _, h, w = img.shape
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + q.transpose(1, 2, 0).tobytes()


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def write_ppm(path, img: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))
