"""Portable any-map (PGM/PPM) raster I/O, binary variants only."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError


def to_bytes(values: np.ndarray, lo: float = None, hi: float = None) -> np.ndarray:
    """Linearly map real values to 0..255."""
    v = np.asarray(values, dtype=np.float64)
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.clip(np.rint((v - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def write_pnm(path, image: np.ndarray) -> None:
    """(H, W) uint8 -> P5, (H, W, 3) uint8 -> P6."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise TypeError(f"expected uint8 raster, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"unsupported raster shape {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens (comments skipped) and the data offset."""
    out, i, n = [], 0, len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ParseError("truncated PNM header")
        out.append(data[i:j])
        i = j
    return out, i + 1


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), off = _tokens(data, 4)
    if magic not in (b"P5", b"P6") or int(maxval) != 255:
        raise ParseError(f"unsupported PNM variant {magic!r} maxval {maxval!r}")
    w, h = int(w), int(h)
    ch = 1 if magic == b"P5" else 3
    arr = np.frombuffer(data, dtype=np.uint8, count=w * h * ch, offset=off)
    return arr.reshape((h, w) if ch == 1 else (h, w, 3)).copy()


def read_pnm_size(path) -> tuple:
    """(width, height) from the header only."""
    with open(path, "rb") as fh:
        head = fh.read(512)
    (_, w, h, _), _ = _tokens(head, 4)
    return int(w), int(h)
