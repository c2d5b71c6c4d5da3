"""ZFM1 model checkpoints.

Layout: magic "ZFM1"; little-endian u32 JSON length + the estimator's
constructor parameters as sorted-key JSON; u32 blob count; then per blob a
u16 name length + UTF-8 name, u8 dtype code (0 = float32, 1 = float64),
u8 ndim, u32 per dimension, and the raw little-endian array bytes. All
network parameters are stored, frozen encoder included, so a checkpoint is
self-contained even though the frozen weights are reproducible from the
seed. Writing is deterministic byte for byte.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import RasterFormatError, TruncationError, ValidationError
from .estimator import FloodSegmenter

_MAGIC = b"ZFM1"
_DTYPE_CODES = {"<f4": 0, "<f8": 1}
_DTYPE_NAMES = {0: "<f4", 1: "<f8"}


def _config_bytes(estimator: FloodSegmenter) -> bytes:
    params = estimator.get_params()
    params["tim_modalities"] = list(params["tim_modalities"] or ())
    return json.dumps(params, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(estimator: FloodSegmenter, path) -> None:
    """Write a fitted estimator's configuration and parameters."""
    if not hasattr(estimator, "network_"):
        raise ValidationError("cannot checkpoint an unfitted estimator")
    config = _config_bytes(estimator)
    blobs = [(p.name, p.value) for p in estimator.network_.all_parameters()]
    blobs.append(("input.mean", estimator.input_mean_))
    blobs.append(("input.scale", estimator.input_scale_))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(config)))
        fh.write(config)
        fh.write(struct.pack("<I", len(blobs)))
        for name, value in blobs:
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(value)
            code = _DTYPE_CODES[arr.dtype.newbyteorder("<").str]
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(_DTYPE_NAMES[code], copy=False).tobytes())


def load_checkpoint(path) -> FloodSegmenter:
    """Rebuild a predict-ready estimator from a ZFM1 file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise RasterFormatError(f"{path}: not a ZFM1 checkpoint (bad magic)")
    try:
        return _parse_checkpoint(blob, path)
    except struct.error:
        raise TruncationError(f"{path}: checkpoint ends mid-record")


def _parse_checkpoint(blob: bytes, path) -> FloodSegmenter:
    offset = 4
    (config_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if len(blob) < offset + config_len:
        raise TruncationError(f"{path}: configuration truncated")
    params = json.loads(blob[offset : offset + config_len].decode("utf-8"))
    params["tim_modalities"] = tuple(params["tim_modalities"])
    offset += config_len

    estimator = FloodSegmenter(**params)
    modalities = estimator._validated_params()
    net = estimator._build_network(modalities)
    by_name = {p.name: p for p in net.all_parameters()}
    extras = {}

    (n_blobs,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    seen = set()
    for _ in range(n_blobs):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", blob, offset)
        offset += 2
        if code not in _DTYPE_NAMES:
            raise RasterFormatError(f"{path}: unknown dtype code {code} for {name}")
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        dtype = np.dtype(_DTYPE_NAMES[code])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dtype.itemsize
        if len(blob) < offset + nbytes:
            raise TruncationError(f"{path}: parameter {name} truncated")
        values = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
        offset += nbytes
        if name.startswith("input."):
            extras[name] = values.reshape(shape).copy()
            continue
        if name not in by_name:
            raise RasterFormatError(f"{path}: unexpected parameter {name}")
        target = by_name[name]
        if tuple(shape) != target.value.shape:
            raise RasterFormatError(
                f"{path}: parameter {name} has shape {tuple(shape)}, expected {target.value.shape}"
            )
        target.value[...] = values.reshape(shape).astype(target.value.dtype)
        seen.add(name)
    if offset != len(blob):
        raise TruncationError(f"{path}: {len(blob) - offset} trailing bytes")
    missing = (set(by_name) - seen) | ({"input.mean", "input.scale"} - set(extras))
    if missing:
        raise RasterFormatError(f"{path}: missing parameter(s) {sorted(missing)}")

    estimator.input_mean_ = extras["input.mean"]
    estimator.input_scale_ = extras["input.scale"]
    estimator.network_ = net
    estimator.modalities_ = modalities
    estimator.n_features_in_ = estimator.in_channels
    return estimator
