"""Grayscale image container and preprocessing for the context classifier."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class Image:
    """Row-major grayscale intensities in [0, 1]."""

    width: int
    height: int
    data: np.ndarray  # (height, width) float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("image dimensions must be positive")
        if self.data.shape != (self.height, self.width):
            raise ConfigError("image data shape must be (height, width)")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ConfigError("intensities must lie in [0, 1]")

    @classmethod
    def from_array(cls, arr) -> "Image":
        arr = np.asarray(arr, dtype=float)
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr)


def _area_average_1d(arr, out_n, axis):
    """Exact area-average resampling along one axis via cumulative sums."""
    arr = np.moveaxis(arr, axis, 0)
    n = arr.shape[0]
    cum = np.concatenate([np.zeros((1,) + arr.shape[1:]), np.cumsum(arr, axis=0)])

    edges = np.linspace(0.0, n, out_n + 1)
    lo = np.floor(edges[:-1]).astype(int)
    hi = np.ceil(edges[1:]).astype(int)
    out = np.empty((out_n,) + arr.shape[1:])
    for i in range(out_n):
        a, b = edges[i], edges[i + 1]
        ia, ib = lo[i], min(hi[i], n)
        total = cum[ib] - cum[ia]
        # trim fractional cells at both ends
        total = total - (a - ia) * arr[ia]
        if ib > ia and b < ib:
            total = total - (ib - b) * arr[ib - 1]
        out[i] = total / (b - a)
    return np.moveaxis(out, 0, axis)


def preprocess(raw, target: int) -> Image:
    """Luminance conversion and area-average resize to target x target.

    raw: (h, w) grayscale or (h, w, 3) RGB, values in [0, 1].
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 3:
        if raw.shape[2] != 3:
            raise ConfigError("color images must have 3 channels")
        raw = 0.299 * raw[:, :, 0] + 0.587 * raw[:, :, 1] + 0.114 * raw[:, :, 2]
    if raw.ndim != 2 or raw.shape[0] == 0 or raw.shape[1] == 0:
        raise ConfigError("image must be nonempty 2D (or RGB 3D)")
    if target <= 0:
        raise ConfigError("target size must be positive")
    out = _area_average_1d(raw, target, axis=0)
    out = _area_average_1d(out, target, axis=1)
    return Image.from_array(np.clip(out, 0.0, 1.0))
