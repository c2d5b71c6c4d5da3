"""Minimal channel-last tensor layers with explicit forward/backward passes.

Everything is plain numpy on (N, H, W, C) arrays; channel-last keeps patch
assembly contiguous, which is what makes the convolutions fast enough for
CPU training. Convolutions use edge-replicate padding so that a spatially
constant input produces a spatially constant output; this keeps tiled
inference free of artificial border structure.

Each layer caches what its backward pass needs from the most recent forward
call, so instances are not reentrant.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class Parameter:
    """A named trainable array and its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


def _fold_edge_padding(dxp):
    """Accumulate gradients from replicate-padded borders back onto the edges."""
    dx = dxp[:, 1:-1, 1:-1, :].copy()
    dx[:, 0, :, :] += dxp[:, 0, 1:-1, :]
    dx[:, -1, :, :] += dxp[:, -1, 1:-1, :]
    dx[:, :, 0, :] += dxp[:, 1:-1, 0, :]
    dx[:, :, -1, :] += dxp[:, 1:-1, -1, :]
    dx[:, 0, 0, :] += dxp[:, 0, 0, :]
    dx[:, 0, -1, :] += dxp[:, 0, -1, :]
    dx[:, -1, 0, :] += dxp[:, -1, 0, :]
    dx[:, -1, -1, :] += dxp[:, -1, -1, :]
    return dx


def _patch_cols(x, pad, mode):
    """(N, H_out, W_out, 9C) patch matrix of a padded input.

    Rows hold the 3x3 neighbourhood in (row offset, col offset, channel)
    order, matching a (3, 3, C, ...) kernel flattened over its first three
    axes. Built from a strided view so each copied run is 3C contiguous
    elements.
    """
    n, h, w, c = x.shape
    if mode == "constant":
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    else:
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)), mode=mode)
    out_h = h + 2 * pad - 2
    out_w = w + 2 * pad - 2
    window = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, xp.shape[1], out_w, 3 * c),
        strides=xp.strides[:2] + (xp.strides[2], xp.strides[3]),
    )
    cols = np.empty((n, out_h, out_w, 9 * c), dtype=x.dtype)
    for di in range(3):
        cols[..., di * 3 * c : (di + 1) * 3 * c] = window[:, di : di + out_h]
    return cols


class Conv3x3:
    """3x3 convolution, stride 1, edge-replicate padding (same output size).

    Weights are stored (3, 3, C_in, C_out) so the patch matrix and the
    flattened kernel share one (9 * C_in) ordering.
    """

    def __init__(self, in_channels, out_channels, rng, name="conv", dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        scale = np.sqrt(2.0 / (in_channels * 9))
        w = rng.normal(0.0, scale, size=(3, 3, in_channels, out_channels))
        self.weight = Parameter(f"{name}.weight", w.astype(dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype=dtype))
        self._cols = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.shape[-1] != self.in_channels:
            raise ShapeError(
                f"{self.weight.name}: expected {self.in_channels} channels, got {x.shape[-1]}"
            )
        n, h, w, c = x.shape
        cols = _patch_cols(x, 1, "edge")
        self._cols = cols
        wmat = self.weight.value.reshape(9 * c, self.out_channels)
        out = cols.reshape(-1, 9 * c) @ wmat + self.bias.value
        return out.reshape(n, h, w, self.out_channels)

    def backward(self, dy):
        n, h, w, _ = dy.shape
        c = self.in_channels
        cols = self._cols.reshape(-1, 9 * c)
        dyf = dy.reshape(-1, self.out_channels)

        self.bias.grad += dyf.sum(axis=0)
        self.weight.grad += (cols.T @ dyf).reshape(self.weight.value.shape)

        # Gradient to the padded input is dy (zero-extended) convolved with
        # the kernel flipped spatially and transposed over channels; the
        # replicate-padding contributions are then folded onto the edges.
        flipped = self.weight.value[::-1, ::-1].transpose(0, 1, 3, 2)
        fmat = np.ascontiguousarray(flipped).reshape(9 * self.out_channels, c)
        dy_cols = _patch_cols(dy, 2, "constant")
        dxp = (dy_cols.reshape(-1, 9 * self.out_channels) @ fmat).reshape(n, h + 2, w + 2, c)
        return _fold_edge_padding(dxp)


class Conv1x1:
    """Per-pixel linear map across channels."""

    def __init__(self, in_channels, out_channels, rng, name="proj", dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        scale = np.sqrt(2.0 / in_channels)
        w = rng.normal(0.0, scale, size=(in_channels, out_channels))
        self.weight = Parameter(f"{name}.weight", w.astype(dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype=dtype))
        self._x = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.shape[-1] != self.in_channels:
            raise ShapeError(
                f"{self.weight.name}: expected {self.in_channels} channels, got {x.shape[-1]}"
            )
        self._x = x
        out = x.reshape(-1, self.in_channels) @ self.weight.value + self.bias.value
        return out.reshape(x.shape[:-1] + (self.out_channels,))

    def backward(self, dy):
        dyf = dy.reshape(-1, self.out_channels)
        xf = self._x.reshape(-1, self.in_channels)
        self.bias.grad += dyf.sum(axis=0)
        self.weight.grad += xf.T @ dyf
        return (dyf @ self.weight.value.T).reshape(self._x.shape)


class ReLU:
    def __init__(self):
        self._mask = None

    def parameters(self):
        return []

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0)


class MaxPool2:
    """2x2 max pooling with stride 2; ties resolve to the first element."""

    def __init__(self):
        self._idx = None
        self._shape = None

    def parameters(self):
        return []

    def forward(self, x):
        n, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"max pooling needs even spatial dims, got {h}x{w}")
        blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
        blocks = blocks.reshape(n, h // 2, w // 2, 4, c)
        self._idx = blocks.argmax(axis=3)
        self._shape = (n, h, w, c)
        return np.take_along_axis(blocks, self._idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward(self, dy):
        n, h, w, c = self._shape
        d4 = np.zeros((n, h // 2, w // 2, 4, c), dtype=dy.dtype)
        np.put_along_axis(d4, self._idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        d4 = d4.reshape(n, h // 2, w // 2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
        return d4.reshape(n, h, w, c)


class UpsampleNearest2:
    """Nearest-neighbour 2x upsampling."""

    def parameters(self):
        return []

    def forward(self, x):
        return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)

    def backward(self, dy):
        n, h, w, c = dy.shape
        return dy.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))
