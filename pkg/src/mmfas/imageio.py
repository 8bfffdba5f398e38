"""Image readers/writers: 8-bit PNG, 16-bit PNG and the ``FASD`` raw tile format.

``FASD`` tiles store wide-range (up to 32-bit) single-channel sensor data::

    b"FASD" | u32 height | u32 width | u32 max_raw | height*width u32 values

All integers little-endian, values row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

FASD_MAGIC = b"FASD"
_HEADER = struct.Struct("<4sIII")


def write_fasd(path, values, max_raw: int = 2**24 - 1) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"FASD tiles are single-channel 2-D, got shape {values.shape}")
    if values.size and (values.min() < 0 or values.max() > max_raw):
        raise ValueError(f"values must lie in [0, {max_raw}]")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FASD_MAGIC, h, w, max_raw))
        fh.write(values.astype("<u4").tobytes(order="C"))


def read_fasd(path) -> tuple[np.ndarray, int]:
    """Return ``(values, max_raw)``; values as ``int64``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated FASD header")
    magic, h, w, max_raw = _HEADER.unpack_from(data)
    if magic != FASD_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * h * w
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<u4", offset=_HEADER.size).reshape(h, w)
    return values.astype(np.int64), int(max_raw)


def read_raw(path) -> tuple[np.ndarray, int]:
    """Read a raw depth/IR map from a FASD tile or a 16-bit PNG."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == FASD_MAGIC:
        return read_fasd(path)
    with Image.open(path) as im:
        arr = np.array(im)
    if arr.ndim != 2:
        raise ValueError(f"{path}: raw maps must be single-channel")
    max_raw = 2**16 - 1 if arr.dtype.itemsize <= 2 else 2**32 - 1
    return arr.astype(np.int64), max_raw


def write_png16(path, values) -> None:
    values = np.asarray(values)
    if values.size and (values.min() < 0 or values.max() > 2**16 - 1):
        raise ValueError("16-bit PNG values must lie in [0, 65535]")
    Image.fromarray(values.astype(np.uint16)).save(path)


def read_png8(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if len(im.getbands()) >= 3 else "L")
        return np.array(im, dtype=np.uint8)


def write_png8(path, image) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {image.dtype}")
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    # optimize/compress settings fixed so identical arrays give identical bytes
    Image.fromarray(image).save(path, format="PNG", compress_level=6)
