"""Sliding-window patch extraction and per-patch instance normalization.

Patches are the unit-stride windows of length ``w`` over the series; a
series of N steps yields N - w + 1 of them. Starts are 0-based. Patch
values are stored raw; normalization is applied lazily at encode time so
the patch set is a view into the series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError
from .io import TimeSeries

DEFAULT_EPS = 1e-5


@dataclass
class PatchSet:
    """All unit-stride windows of one series: values[i] starts at starts[i]."""

    values: np.ndarray  # (n_patches, w, d), raw
    starts: np.ndarray  # (n_patches,), 0-based, consecutive

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def window(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    def patch(self, i: int) -> np.ndarray:
        return self.values[i]


def extract_patches(series, w: int) -> PatchSet:
    """Extract all N - w + 1 unit-stride windows, raw values.

    ``series`` may be a TimeSeries or an (N, d) array.
    """
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if w < 2:
        raise InputError(f"window length must be >= 2, got {w}")
    n = values.shape[0]
    if n < w:
        raise InputError(f"series has {n} steps but patching needs at least w={w}")
    windows = sliding_window_view(values, w, axis=0)  # (n-w+1, d, w), view
    return PatchSet(values=windows.transpose(0, 2, 1), starts=np.arange(n - w + 1))


def instance_normalize(patch: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Standardize each channel of a patch to zero mean, unit variance.

    Works on a single (w, d) patch or a batch (..., w, d); statistics are
    per channel over the w steps, variance is the population (1/w) variance.
    ``eps`` is added to the variance, so constant channels map to zeros.
    """
    if eps <= 0:
        raise InputError(f"eps must be positive, got {eps}")
    patch = np.asarray(patch)
    mean = patch.mean(axis=-2, keepdims=True)
    var = patch.var(axis=-2, keepdims=True)
    return (patch - mean) / np.sqrt(var + eps)
