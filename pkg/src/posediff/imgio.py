"""Binary PPM (P6) / PGM (P5) image files and float conversions.

Model code works on float32 arrays shaped (3, H, W) in [-1, 1]; the
renderer and the files on disk use uint8 (H, W, 3). Conversions here
are the only place the two conventions meet.
"""

from __future__ import annotations

import numpy as np


def write_ppm(path, img_u8):
    """Write an (H, W, 3) uint8 array as binary P6, maxval 255."""
    img_u8 = np.ascontiguousarray(img_u8, dtype=np.uint8)
    h, w, c = img_u8.shape
    if c != 3:
        raise ValueError(f"expected 3 channels, got {c}")
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img_u8.tobytes())


def write_pgm(path, img_u8):
    """Write an (H, W) uint8 array as binary P5, maxval 255."""
    img_u8 = np.ascontiguousarray(img_u8, dtype=np.uint8)
    h, w = img_u8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img_u8.tobytes())


def _read_header(f, magic):
    if f.read(2) != magic:
        raise ValueError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < 3:
        line = f.readline()
        if not line:
            raise ValueError("truncated header")
        body = line.split(b"#", 1)[0]
        fields.extend(body.split())
    w, h, maxval = (int(v) for v in fields[:3])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    return w, h


def read_ppm(path):
    """Read a binary P6 file into an (H, W, 3) uint8 array."""
    with open(path, "rb") as f:
        w, h = _read_header(f, b"P6")
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3).copy()


def read_pgm(path):
    with open(path, "rb") as f:
        w, h = _read_header(f, b"P5")
        data = np.frombuffer(f.read(w * h), dtype=np.uint8)
    return data.reshape(h, w).copy()


def to_float(img_u8):
    """uint8 (H, W, 3) -> float32 (3, H, W) in [-1, 1]."""
    x = img_u8.astype(np.float32) / 255.0 * 2.0 - 1.0
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def to_uint8(img_f):
    """float (3, H, W) in [-1, 1] -> uint8 (H, W, 3), round-to-even."""
    x = (np.clip(img_f, -1.0, 1.0) + 1.0) / 2.0 * 255.0
    return np.rint(x).astype(np.uint8).transpose(1, 2, 0)
