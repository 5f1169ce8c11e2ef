"""Load and save 8-bit grayscale rasters.

Two formats: PNG (8-bit grayscale only) and binary PGM (P5, maxval 255).
Both round-trip losslessly.  Color or deeper inputs are rejected rather
than silently converted; callers convert explicitly if they mean to.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

from .warpfield import validate_image


class RasterFormatError(ValueError):
    """Raised for files that are not plain 8-bit grayscale rasters."""


def _parse_pgm(data: bytes, path: Path) -> np.ndarray:
    # Netpbm P5: magic, whitespace-separated width/height/maxval with
    # optional '#' comments, one whitespace byte, then raw samples.
    if not data.startswith(b"P5"):
        raise RasterFormatError(f"{path}: not a binary PGM (missing P5 magic)")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RasterFormatError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise RasterFormatError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise RasterFormatError(f"{path}: PGM maxval {maxval}, only 255 (8-bit) supported")
    expected = width * height
    raw = data[pos : pos + expected]
    if len(raw) != expected:
        raise RasterFormatError(f"{path}: PGM payload truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Decode a grayscale raster file into a (height, width) uint8 array.

    The format is sniffed from the file magic (PNG signature or P5).
    Raises RasterFormatError for color, paletted or non-8-bit inputs.
    """
    p = Path(path)
    data = p.read_bytes()
    if data.startswith(b"P5"):
        img = _parse_pgm(data, p)
    elif data.startswith(b"\x89PNG\r\n\x1a\n"):
        with Image.open(p) as im:
            if im.mode != "L":
                raise RasterFormatError(
                    f"{p}: mode {im.mode!r} is not 8-bit grayscale (expected 'L')"
                )
            img = np.asarray(im, dtype=np.uint8)
    else:
        raise RasterFormatError(f"{p}: unrecognized format (expected PNG or binary PGM)")
    return validate_image(img)


def save_image(image: np.ndarray, path: str | os.PathLike) -> None:
    """Encode a uint8 grayscale array losslessly; format chosen by extension.

    ``.png`` writes 8-bit grayscale PNG, ``.pgm`` binary P5.  The parent
    directory must already exist; nothing is written on failure.
    """
    img = validate_image(image)
    p = Path(path)
    if not p.parent.is_dir():
        raise FileNotFoundError(f"destination directory does not exist: {p.parent}")
    suffix = p.suffix.lower()
    if suffix == ".png":
        Image.fromarray(img, mode="L").save(p, format="PNG")
    elif suffix == ".pgm":
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
        p.write_bytes(header + img.tobytes())
    else:
        raise RasterFormatError(f"unsupported output extension {suffix!r} (use .png or .pgm)")
