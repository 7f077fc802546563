"""Grayscale images, binary PGM I/O, reflection padding, patch extraction.

An image is a 2-D float64 array indexed (row, col). Intensities sit in
[0, 1] after loading; solver intermediates are allowed to leave that range.
PGM (P5) is the only file format: it is lossless and trivially bit-exact,
which the dataset and weight pipelines rely on. 16-bit samples are
big-endian per the Netpbm convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError

__all__ = [
    "Patch",
    "as_image",
    "load_pgm",
    "pgm_info",
    "save_pgm",
    "reflect_pad",
    "extract_patches",
]

_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass(frozen=True)
class Patch:
    """Square window copied out of a source image.

    ``origin`` is the (row, col) of the window's top-left pixel in the
    source. ``data`` is an owned copy, never a view.
    """

    data: np.ndarray
    origin: tuple[int, int]

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ArgumentError(f"patch data must be square, got shape {self.data.shape}")

    @property
    def size(self) -> int:
        return self.data.shape[0]


def as_image(a, name: str = "image") -> np.ndarray:
    """Validate and return ``a`` as a 2-D finite float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ArgumentError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite values")
    return arr


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Return the next header token and the offset just past it.

    Skips whitespace and ``#`` comments, as the Netpbm grammar allows.
    """
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in _WHITESPACE:
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos] not in (0x0A, 0x0D):
                pos += 1
        else:
            break
    if pos >= n:
        raise FormatError("unexpected end of PGM header", offset=pos)
    start = pos
    while pos < n and buf[pos : pos + 1] not in _WHITESPACE:
        pos += 1
    return buf[start:pos], pos


def _header_int(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    token, end = _next_token(buf, pos)
    if not token.isdigit():
        raise FormatError(f"invalid {what} {token!r} in PGM header", offset=end - len(token))
    return int(token), end


def _parse_header(buf: bytes) -> tuple[int, int, int, int]:
    """Return (width, height, maxval, payload offset) of a P5 buffer."""
    if buf[:2] != b"P5":
        raise FormatError(f"not a binary PGM (P5) file: magic {buf[:2]!r}", offset=0)
    width, pos = _header_int(buf, 2, "width")
    height, pos = _header_int(buf, pos, "height")
    maxval, pos = _header_int(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM dimensions {width}x{height}", offset=2)
    if maxval not in (255, 65535):
        raise FormatError(f"unsupported PGM maxval {maxval}", offset=pos)
    if pos >= len(buf) or buf[pos : pos + 1] not in _WHITESPACE:
        raise FormatError("missing whitespace after PGM maxval", offset=pos)
    return width, height, maxval, pos + 1


def pgm_info(path) -> tuple[int, int, int]:
    """Header fields (width, height, maxval) without reading the pixels."""
    with open(path, "rb") as fh:
        head = fh.read(512)
    width, height, maxval, _ = _parse_header(head)
    return width, height, maxval


def load_pgm(path) -> np.ndarray:
    """Load a binary PGM (P5) file as a float64 image in [0, 1].

    Intensities are divided by the file's maxval. Only maxval 255 and
    65535 are supported; 16-bit samples are read big-endian.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    width, height, maxval, data_start = _parse_header(buf)
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    available = len(buf) - data_start
    if available < expected:
        raise FormatError(
            f"truncated PGM payload: expected {expected} bytes, found {available}",
            offset=len(buf),
        )
    raw = np.frombuffer(buf, dtype=dtype, count=width * height, offset=data_start)
    return raw.reshape(height, width).astype(np.float64) / maxval


def save_pgm(img, path, maxval: int = 255) -> None:
    """Write ``img`` as binary PGM, clamping to [0, 1] before quantisation.

    Quantisation rounds half to even, so a save/load round trip moves each
    pixel by at most half a quantisation step.
    """
    arr = as_image(img)
    if maxval not in (255, 65535):
        raise ArgumentError(f"maxval must be 255 or 65535, got {maxval}")
    q = np.rint(np.clip(arr, 0.0, 1.0) * maxval)
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    height, width = arr.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(q.astype(dtype).tobytes())


def reflect_pad(img, margin: int) -> np.ndarray:
    """Pad by mirror reflection that excludes the edge pixel.

    A 1-D row [a, b, c] padded by 1 becomes [b, a, b, c, b]; no pixel is
    duplicated at the border, which avoids flat gradients along the seam.
    """
    arr = as_image(img)
    if margin < 0:
        raise ArgumentError(f"margin must be non-negative, got {margin}")
    if margin >= min(arr.shape):
        raise ArgumentError(
            f"margin {margin} too large for image of shape {arr.shape} "
            "(reflection without repetition needs margin < min dimension)"
        )
    if margin == 0:
        return arr.copy()
    return np.pad(arr, margin, mode="reflect")


def extract_patches(img, size: int, stride: int) -> list[Patch]:
    """Extract square patches on a regular grid of top-left origins.

    Origins run over {0, stride, 2*stride, ...} independently per axis
    while the patch still fits, in row-major order. Patches are copies.
    """
    arr = as_image(img)
    height, width = arr.shape
    if size < 1:
        raise ArgumentError(f"patch size must be positive, got {size}")
    if stride < 1:
        raise ArgumentError(f"stride must be positive, got {stride}")
    if size > min(height, width):
        raise ArgumentError(f"patch size {size} exceeds image of shape {arr.shape}")
    patches = []
    for row in range(0, height - size + 1, stride):
        for col in range(0, width - size + 1, stride):
            patches.append(Patch(data=arr[row : row + size, col : col + size].copy(), origin=(row, col)))
    return patches
