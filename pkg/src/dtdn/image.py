"""Image container conventions, binary PPM (P6) codec, resizing and clipping.

Images are ``float64`` numpy arrays of shape ``(H, W, C)`` with ``C`` in
{1, 3} and intensities in the unit interval.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError, ShapeError

LEVELS = 256
_WHITESPACE = b" \t\n\r\v\f"


def as_image(arr) -> np.ndarray:
    """Validate and return ``arr`` as a float64 (H, W, C) image.

    Two-dimensional input is promoted to a single channel.
    """
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeError(f"expected (H, W, 1|3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"empty image shape {img.shape}")
    return img


def clip_unit(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def quantize(img: np.ndarray) -> np.ndarray:
    """Map intensities to 8-bit codes, rounding half away from zero."""
    scaled = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * (LEVELS - 1)
    # scaled is non-negative, so floor(x + 0.5) is round-half-away-from-zero
    return np.floor(scaled + 0.5).astype(np.uint8)


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos:pos + 1] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PPM header")
    return buf[start:pos], pos


def decode_p6(data: bytes) -> np.ndarray:
    """Decode a binary PPM byte string into an (H, W, 3) image."""
    data = bytes(data)
    if data[:2] != b"P6":
        raise FormatError("missing P6 magic")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _next_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"non-integer PPM header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"invalid PPM dimensions {width}x{height}")
    if maxval != LEVELS - 1:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is accepted")
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise FormatError("PPM header must end with a single whitespace byte")
    payload = data[pos + 1:]
    expected = 3 * width * height
    if len(payload) != expected:
        raise LengthError(f"PPM payload has {len(payload)} bytes, header implies {expected}")
    codes = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return codes.astype(np.float64) / (LEVELS - 1)


def encode_p6(img: np.ndarray) -> bytes:
    img = as_image(img)
    if img.shape[2] != 3:
        raise ShapeError(f"P6 encoding needs 3 channels, got {img.shape[2]}")
    h, w, _ = img.shape
    header = f"P6\n{w} {h}\n{LEVELS - 1}\n".encode("ascii")
    return header + quantize(img).tobytes()


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    return decode_p6(Path(path).read_bytes())


def write_ppm(path: str | os.PathLike, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_p6(img))


def _axis_coords(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel (align-corners-false) sample centres."""
    img = as_image(img)
    if new_h < 1 or new_w < 1:
        raise ShapeError(f"target size must be positive, got {new_h}x{new_w}")
    h, w, _ = img.shape
    r0, r1, fr = _axis_coords(h, new_h)
    c0, c1, fc = _axis_coords(w, new_w)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    # lerp as a + f*(b - a) keeps constants and same-size resizes exact
    top = img[r0][:, c0] + fc * (img[r0][:, c1] - img[r0][:, c0])
    bot = img[r1][:, c0] + fc * (img[r1][:, c1] - img[r1][:, c0])
    return top + fr * (bot - top)
