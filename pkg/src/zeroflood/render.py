"""Mask rendering to binary PGM (P5) images.

Flood pixels render as 255 on black; invalid pixels render as background.
PGM is used because the byte layout is trivial to specify and verify, and a
round trip through read_pgm is exact.
"""

from __future__ import annotations

import numpy as np

from .errors import RasterFormatError, ShapeError, ValidationError
from .metrics import BinaryMask
from .raster import CATEGORICAL, RasterGrid


def raster_to_mask(raster: RasterGrid, threshold: float = 0.5) -> BinaryMask:
    """Interpret a raster as a binary flood mask.

    Categorical rasters mark code 1 as flood; continuous rasters are
    thresholded (value > threshold). nodata pixels become invalid.
    """
    valid = raster.valid_mask()
    if raster.kind == CATEGORICAL:
        flood = raster.data == 1
    else:
        flood = raster.data > threshold
    return BinaryMask(flood & valid, valid=valid)


def mask_to_pgm_bytes(mask: BinaryMask) -> bytes:
    payload = np.where(mask.pixels & mask.valid, 255, 0).astype(np.uint8)
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    return header + payload.tobytes()


def write_pgm(mask: BinaryMask, path) -> None:
    with open(path, "wb") as fh:
        fh.write(mask_to_pgm_bytes(mask))


def read_pgm(path) -> np.ndarray:
    """Parse a binary (P5) PGM back into a (height, width) uint8 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise RasterFormatError(f"{path}: not a binary PGM (bad magic)")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RasterFormatError(f"{path}: truncated PGM header")
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise RasterFormatError(f"{path}: expected maxval 255, got {maxval}")
    expected = width * height
    payload = blob[pos:]
    if len(payload) != expected:
        raise RasterFormatError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def composite_side_by_side(left: BinaryMask, right: BinaryMask, gap: int = 1) -> BinaryMask:
    """Two masks joined horizontally with an invalid separator column.

    Useful for prediction-versus-reference figures; the separator renders
    as background.
    """
    if left.pixels.shape != right.pixels.shape:
        raise ShapeError(
            f"cannot composite masks of shapes {left.pixels.shape} and {right.pixels.shape}"
        )
    if gap < 0:
        raise ValidationError(f"gap must be >= 0, got {gap}")
    h = left.height
    spacer = np.zeros((h, gap), dtype=bool)
    pixels = np.hstack([left.pixels, spacer, right.pixels])
    valid = np.hstack([left.valid, spacer, right.valid])
    return BinaryMask(pixels, valid=valid)
