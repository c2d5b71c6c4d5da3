"""Synthetic separable segmentation tiles for tests and demos.

Each tile is a smooth random field; the target mask is the first channel
thresholded at zero, so a pixel-wise decision rule solves the task exactly
and a small model is expected to reach near-perfect scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _box3(x):
    """3x3 box filter with edge replication over the trailing two axes."""
    xp = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)], mode="edge")
    h, w = x.shape[-2], x.shape[-1]
    out = np.zeros_like(x)
    for di in range(3):
        for dj in range(3):
            out += xp[..., di : di + h, dj : dj + w]
    return out / 9.0


def make_tiles(n: int, size: int = 64, in_channels: int = 1, seed: int = 0, block: int = 8):
    """n smooth tiles (n, C, size, size) and masks (n, size, size).

    The field is blocky noise upsampled by `block` and box-blurred twice;
    the mask is channel 0 > 0 of the finished field.
    """
    if size % block:
        raise ValueError(f"size {size} must be a multiple of block {block}")
    rng = np.random.default_rng(seed)
    coarse = rng.normal(size=(n, in_channels, size // block, size // block))
    X = np.kron(coarse, np.ones((block, block)))
    X = _box3(_box3(X))
    y = X[:, 0] > 0.0
    return X.astype(np.float32), y


@dataclass(frozen=True)
class SyntheticTask:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


def make_synthetic_task(
    n_train: int = 20,
    n_val: int = 6,
    n_test: int = 6,
    size: int = 64,
    in_channels: int = 1,
    seed: int = 0,
) -> SyntheticTask:
    """A fixed train/val/test partition of freshly generated tiles."""
    X, y = make_tiles(n_train + n_val + n_test, size=size, in_channels=in_channels, seed=seed)
    a, b = n_train, n_train + n_val
    return SyntheticTask(
        X_train=X[:a], y_train=y[:a],
        X_val=X[a:b], y_val=y[a:b],
        X_test=X[b:], y_test=y[b:],
    )
