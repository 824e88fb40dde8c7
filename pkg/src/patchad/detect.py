"""Anomaly scoring: patch-level kNN scores aggregated per time step.

The score of a patch is the mean cosine distance to its k nearest memory
bank vectors. The score of a time step is the mean patch score over all
valid patches containing it. Patches whose nominal start would fall
outside [0, N' - w] are simply excluded, so every time step averages over
the (possibly smaller) valid set; no padding is introduced.
"""

from __future__ import annotations

import numpy as np

from .bank import ReducedMemoryBank, knn, knn_matrix
from .errors import InputError
from .io import ScoreSeries, TimeSeries
from .model import PatchModel
from .patching import extract_patches


def patch_score(model: PatchModel, bank: ReducedMemoryBank, patch: np.ndarray, k: int) -> float:
    """Mean of the k smallest cosine distances from the patch embedding to the bank."""
    h = model.encode(np.asarray(patch), train=False)
    return float(knn(bank, h, k).mean())


def patch_scores(model: PatchModel, bank: ReducedMemoryBank, patches: np.ndarray, k: int) -> np.ndarray:
    """Patch-level scores for a whole (n, w, d) stack, one encode pass."""
    h = model.encode_batched(patches)
    return knn_matrix(bank, h, k).mean(axis=1)


def score_series(model: PatchModel, bank: ReducedMemoryBank, series, k: int) -> ScoreSeries:
    """Per-time-step scores for the full series.

    Each patch is encoded and scored exactly once; time step t averages the
    scores of the patches whose window covers t.
    """
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    w = model.w
    if n < w:
        raise InputError(f"series has {n} steps; scoring needs at least w={w}")
    patchset = extract_patches(values, w)
    if patchset.n_channels != model.d:
        raise InputError(
            f"series has {patchset.n_channels} channels but model expects {model.d}"
        )
    per_patch = patch_scores(model, bank, patchset.values, k)
    n_patches = len(patchset)
    scores = np.empty(n, dtype=np.float64)
    for t in range(n):
        lo = max(0, t - w + 1)
        hi = min(t, n_patches - 1)
        scores[t] = per_patch[lo : hi + 1].mean()
    return ScoreSeries(scores=scores)
