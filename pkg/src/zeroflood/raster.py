"""Single-band raster grids with axis-aligned georeferencing.

Two kinds of raster are supported: continuous float32 bands (EO imagery) and
categorical uint8 class masks (flood classes). Multi-modal inputs are handled
as several single-band rasters sharing one geotransform, so there is no
multi-band machinery here.

Supported file formats are the textual ESRI ASCII grid and a small flat
binary container ("ZFR1", see read_binary_raster). Both are chosen because
they round-trip bit-exactly without external format libraries.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyWindowError, RasterFormatError, TruncationError, ValidationError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

_MAGIC = b"ZFR1"
_KIND_CODES = {CONTINUOUS: 0, CATEGORICAL: 1}
_KIND_NAMES = {code: kind for kind, code in _KIND_CODES.items()}


@dataclass(frozen=True)
class GeoTransform:
    """Rotation-free mapping between pixel indices and world coordinates.

    origin is the world position of the top-left corner of pixel (0, 0);
    pixel_h is applied downward (rows grow toward smaller y).
    """

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float

    def __post_init__(self):
        if not (self.pixel_w > 0 and self.pixel_h > 0):
            raise ValidationError(
                f"pixel sizes must be positive, got {self.pixel_w} x {self.pixel_h}"
            )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in world coordinates."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValidationError(
                f"degenerate bounding box ({self.min_x}, {self.min_y}, "
                f"{self.max_x}, {self.max_y})"
            )

    @property
    def width(self):
        return self.max_x - self.min_x

    @property
    def height(self):
        return self.max_y - self.min_y


def pixel_to_world(transform: GeoTransform, col: int, row: int) -> tuple[float, float]:
    """World coordinates of the top-left corner of pixel (col, row)."""
    return (
        transform.origin_x + col * transform.pixel_w,
        transform.origin_y - row * transform.pixel_h,
    )


def pixel_center(transform: GeoTransform, col: int, row: int) -> tuple[float, float]:
    """World coordinates of the center of pixel (col, row)."""
    return (
        transform.origin_x + (col + 0.5) * transform.pixel_w,
        transform.origin_y - (row + 0.5) * transform.pixel_h,
    )


def world_to_pixel(transform: GeoTransform, x: float, y: float) -> tuple[int, int]:
    """Floor-based inverse of pixel_to_world.

    Out-of-bounds points map to negative or too-large indices as-is; callers
    are expected to clip.
    """
    col = math.floor((x - transform.origin_x) / transform.pixel_w)
    row = math.floor((transform.origin_y - y) / transform.pixel_h)
    return col, row


@dataclass(eq=False)
class RasterGrid:
    """A single-band georeferenced pixel grid, immutable after construction.

    data is a (height, width) array: float32 for continuous rasters, uint8
    for categorical ones. nodata is carried as a float sentinel, normalized
    to float32 precision and compared exactly after casting to the band
    dtype. Use equals() for full value comparison.
    """

    width: int
    height: int
    transform: GeoTransform
    crs_id: str = ""
    nodata: float = -9999.0
    kind: str = CONTINUOUS
    data: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValidationError(f"unknown raster kind {self.kind!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"empty raster {self.width}x{self.height}")
        dtype = np.float32 if self.kind == CONTINUOUS else np.uint8
        arr = np.asarray(self.data, dtype=dtype)
        if arr.size != self.width * self.height:
            raise ValidationError(
                f"data has {arr.size} values, expected {self.width * self.height}"
            )
        arr = arr.reshape(self.height, self.width)
        arr.setflags(write=False)
        self.data = arr
        if self.kind == CATEGORICAL:
            nd = float(self.nodata)
            if nd != int(nd) or not (0 <= nd <= 255):
                raise ValidationError(
                    f"categorical nodata must be an 8-bit code, got {self.nodata}"
                )
        # Keep the sentinel exactly representable in the ZFR1 header field.
        self.nodata = float(np.float32(self.nodata))

    @property
    def nodata_cast(self):
        """nodata converted to the band dtype, for exact comparisons."""
        return self.data.dtype.type(self.nodata)

    def extent(self) -> BoundingBox:
        t = self.transform
        return BoundingBox(
            min_x=t.origin_x,
            min_y=t.origin_y - self.height * t.pixel_h,
            max_x=t.origin_x + self.width * t.pixel_w,
            max_y=t.origin_y,
        )

    def valid_mask(self) -> np.ndarray:
        return self.data != self.nodata_cast

    def equals(self, other: "RasterGrid") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and self.transform == other.transform
            and self.crs_id == other.crs_id
            and self.nodata == other.nodata
            and self.kind == other.kind
            and np.array_equal(self.data, other.data)
        )


# --- ESRI ASCII grid -------------------------------------------------------

_ASCII_REQUIRED = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def read_ascii_grid(path, kind: str = CONTINUOUS, crs_id: str = "") -> RasterGrid:
    """Read an ESRI ASCII grid file.

    The header must declare ncols, nrows, xllcorner, yllcorner and cellsize;
    NODATA_value is optional and defaults to -9999. Values are parsed
    row-major starting from the northernmost row, following the convention.
    """
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()

    header: dict[str, float] = {}
    tokens = text.split()
    pos = 0
    # Header lines are "<key> <number>" pairs; the data starts at the first
    # token that is not a known header key.
    known = set(_ASCII_REQUIRED) | {"nodata_value"}
    while pos + 1 < len(tokens):
        key = tokens[pos].lower()
        if key not in known:
            break
        try:
            header[key] = float(tokens[pos + 1])
        except ValueError:
            raise RasterFormatError(f"header value for {tokens[pos]!r} is not numeric")
        pos += 2

    for key in _ASCII_REQUIRED:
        if key not in header:
            raise RasterFormatError(f"missing header key {key!r}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols != header["ncols"] or nrows != header["nrows"] or ncols <= 0 or nrows <= 0:
        bad = "ncols" if ncols != header["ncols"] or ncols <= 0 else "nrows"
        raise RasterFormatError(f"header key {bad!r} must be a positive integer")
    cellsize = header["cellsize"]
    if cellsize <= 0:
        raise RasterFormatError("header key 'cellsize' must be positive")
    nodata = header.get("nodata_value", -9999.0)

    values = tokens[pos:]
    expected = ncols * nrows
    if len(values) != expected:
        raise TruncationError(
            f"expected {expected} cell values, found {len(values)}"
        )
    try:
        data = np.array([float(v) for v in values])
    except ValueError as exc:
        raise RasterFormatError(f"non-numeric cell value: {exc}")

    transform = GeoTransform(
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"] + nrows * cellsize,
        pixel_w=cellsize,
        pixel_h=cellsize,
    )
    return RasterGrid(
        width=ncols,
        height=nrows,
        transform=transform,
        crs_id=crs_id,
        nodata=nodata,
        kind=kind,
        data=data,
    )


# --- ZFR1 binary format ----------------------------------------------------

def write_binary_raster(raster: RasterGrid, path) -> None:
    """Write a raster in the ZFR1 container.

    Layout: magic "ZFR1"; little-endian u32 width, u32 height; u8 kind
    (0 continuous, 1 categorical); f64 origin_x, origin_y, pixel_w, pixel_h;
    f32 nodata; u16 crs_id byte length + UTF-8 bytes; row-major payload
    (f32 per pixel for continuous, u8 for categorical).
    """
    t = raster.transform
    crs_bytes = raster.crs_id.encode("utf-8")
    if len(crs_bytes) > 0xFFFF:
        raise ValidationError("crs_id longer than 65535 bytes")
    header = _MAGIC + struct.pack(
        "<IIBddddfH",
        raster.width,
        raster.height,
        _KIND_CODES[raster.kind],
        t.origin_x,
        t.origin_y,
        t.pixel_w,
        t.pixel_h,
        np.float32(raster.nodata),
        len(crs_bytes),
    )
    payload = np.ascontiguousarray(raster.data)
    if raster.kind == CONTINUOUS:
        payload = payload.astype("<f4", copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(crs_bytes)
        fh.write(payload.tobytes())


def read_binary_raster(path) -> RasterGrid:
    """Read a ZFR1 file written by write_binary_raster."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise RasterFormatError(f"{path}: not a ZFR1 raster (bad magic)")
    fixed = struct.calcsize("<IIBddddfH")
    if len(blob) < 4 + fixed:
        raise TruncationError(f"{path}: header truncated")
    width, height, kind_code, ox, oy, pw, ph, nodata, crs_len = struct.unpack_from(
        "<IIBddddfH", blob, 4
    )
    if kind_code not in _KIND_NAMES:
        raise RasterFormatError(f"{path}: unknown kind code {kind_code}")
    kind = _KIND_NAMES[kind_code]
    offset = 4 + fixed
    if len(blob) < offset + crs_len:
        raise TruncationError(f"{path}: crs_id truncated")
    crs_id = blob[offset : offset + crs_len].decode("utf-8")
    offset += crs_len

    itemsize = 4 if kind == CONTINUOUS else 1
    expected = width * height * itemsize
    actual = len(blob) - offset
    if actual != expected:
        raise TruncationError(
            f"{path}: payload has {actual} bytes, expected {expected}"
        )
    dtype = "<f4" if kind == CONTINUOUS else np.uint8
    data = np.frombuffer(blob, dtype=dtype, count=width * height, offset=offset)
    return RasterGrid(
        width=width,
        height=height,
        transform=GeoTransform(ox, oy, pw, ph),
        crs_id=crs_id,
        nodata=float(np.float32(nodata)),
        kind=kind,
        data=data.copy(),
    )


def sniff_raster(path) -> RasterGrid:
    """Read a raster file in either supported format, picked by content."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _MAGIC:
        return read_binary_raster(path)
    return read_ascii_grid(path)


# --- Windowing -------------------------------------------------------------

def _center_range(low: float, high: float, origin: float, step: float, sign: int):
    """Half-open index range [start, stop) of pixels whose centers fall in
    [low, high) along one axis. sign=+1 for columns, -1 for rows."""
    if sign > 0:
        first = (low - origin) / step - 0.5
        last = (high - origin) / step - 0.5
    else:
        first = (origin - high) / step - 0.5
        last = (origin - low) / step - 0.5
    return math.ceil(first), math.ceil(last)


def read_window(raster: RasterGrid, bbox: BoundingBox) -> RasterGrid:
    """Extract the sub-raster of pixels whose centers fall inside bbox.

    The test is half-open (west/north edges inclusive, east/south exclusive)
    so that boxes tiling a region select each pixel exactly once. Where the
    bbox overhangs the raster, pixels are filled with nodata.
    """
    t = raster.transform
    c0, c1 = _center_range(bbox.min_x, bbox.max_x, t.origin_x, t.pixel_w, +1)
    r0, r1 = _center_range(bbox.min_y, bbox.max_y, t.origin_y, t.pixel_h, -1)
    if c1 <= c0 or r1 <= r0:
        raise EmptyWindowError("bounding box selects no pixel centers")
    if c1 <= 0 or r1 <= 0 or c0 >= raster.width or r0 >= raster.height:
        raise EmptyWindowError("bounding box does not intersect the raster")

    out = np.full((r1 - r0, c1 - c0), raster.nodata_cast, dtype=raster.data.dtype)
    sc0, sc1 = max(c0, 0), min(c1, raster.width)
    sr0, sr1 = max(r0, 0), min(r1, raster.height)
    out[sr0 - r0 : sr1 - r0, sc0 - c0 : sc1 - c0] = raster.data[sr0:sr1, sc0:sc1]

    origin = pixel_to_world(t, c0, r0)
    return RasterGrid(
        width=c1 - c0,
        height=r1 - r0,
        transform=GeoTransform(origin[0], origin[1], t.pixel_w, t.pixel_h),
        crs_id=raster.crs_id,
        nodata=raster.nodata,
        kind=raster.kind,
        data=out,
    )
