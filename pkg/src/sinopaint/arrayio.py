"""Binary on-disk format for images and sinograms, plus PGM/PNG export.

Layout of an array file:

    bytes 0..11   magic ``b"tomo.arr\\x00\\x00\\x00\\x00"``
    bytes 12..15  format version, little-endian u32 (currently 1)
    u32           flags (bit 0: row angles present, bit 1: float64 payload)
    u32           n_rows
    u32           n_cols
    [f64 * n_rows]  row angles in degrees, only when flag bit 0 is set
    payload       row-major float32 (default) or float64 (flag bit 1)

All integers and floats are little-endian.  The default payload dtype is
float32; float64 is used where bitwise round-trips of double data matter
(dataset records, fitted model weights).
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"tomo.arr\x00\x00\x00\x00"
VERSION = 1

_FLAG_ANGLES = 1
_FLAG_F64 = 2


class ArrayFormatError(Exception):
    """Raised when an array file is malformed or has the wrong magic."""


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ArrayFormatError(f"truncated file while reading {what}")
    return buf


def write_block(fh, data, angles=None, float64=False):
    """Append one framed array block to an open binary file handle."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ArrayFormatError(f"payload must be 2-D, got shape {data.shape}")
    flags = 0
    if angles is not None:
        angles = np.asarray(angles, dtype=np.float64)
        if angles.shape != (data.shape[0],):
            raise ArrayFormatError("angles length must match row count")
        flags |= _FLAG_ANGLES
    if float64:
        flags |= _FLAG_F64
    fh.write(MAGIC)
    fh.write(struct.pack("<IIII", VERSION, flags, data.shape[0], data.shape[1]))
    if angles is not None:
        fh.write(angles.astype("<f8").tobytes())
    dtype = "<f8" if float64 else "<f4"
    fh.write(np.ascontiguousarray(data, dtype=dtype).tobytes())


def read_block(fh):
    """Read one framed array block; returns (data, angles_or_None).

    The payload is always promoted to float64 in memory.
    """
    magic = _read_exact(fh, len(MAGIC), "magic")
    if magic != MAGIC:
        raise ArrayFormatError(f"bad magic {magic!r}, not an array file")
    version, flags, n_rows, n_cols = struct.unpack(
        "<IIII", _read_exact(fh, 16, "header")
    )
    if version != VERSION:
        raise ArrayFormatError(f"unsupported format version {version}")
    angles = None
    if flags & _FLAG_ANGLES:
        raw = _read_exact(fh, 8 * n_rows, "angles")
        angles = np.frombuffer(raw, dtype="<f8").copy()
    itemsize = 8 if flags & _FLAG_F64 else 4
    dtype = "<f8" if flags & _FLAG_F64 else "<f4"
    raw = _read_exact(fh, itemsize * n_rows * n_cols, "payload")
    data = np.frombuffer(raw, dtype=dtype).reshape(n_rows, n_cols).astype(np.float64)
    return data, angles


def write_array(path, data, angles=None, float64=False):
    with open(path, "wb") as fh:
        write_block(fh, data, angles=angles, float64=float64)


def read_array(path):
    with open(path, "rb") as fh:
        return read_block(fh)


def write_pgm(path, data, invert=False):
    """Export a 2-D array as a 16-bit binary PGM, min/max normalized."""
    img = _to_uint(data, 65535, invert)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode("ascii"))
        fh.write(img.astype(">u2").tobytes())


def write_png(path, data, invert=False):
    """Export a 2-D array as an 8-bit grayscale PNG, min/max normalized."""
    from PIL import Image as PILImage

    img = _to_uint(data, 255, invert).astype(np.uint8)
    PILImage.fromarray(img, mode="L").save(path, format="PNG")


def _to_uint(data, maxval, invert):
    data = np.asarray(data, dtype=np.float64)
    lo, hi = float(data.min()), float(data.max())
    span = hi - lo
    if span == 0.0:
        scaled = np.zeros_like(data)
    else:
        scaled = (data - lo) / span
    if invert:
        scaled = 1.0 - scaled
    return np.round(scaled * maxval).astype(np.uint32)
