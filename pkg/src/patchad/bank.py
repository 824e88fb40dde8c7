"""Memory bank construction, k-means coreset reduction, kNN queries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import PatchModel
from .nn import cosine_distances_to_rows
from .patching import PatchSet


@dataclass
class ReducedMemoryBank:
    """K medoid embeddings; every row is an exact member of the source bank."""

    embeddings: np.ndarray  # (K, l)
    source_indices: np.ndarray | None = None  # positions in the source bank

    def __len__(self) -> int:
        return self.embeddings.shape[0]


def build_bank(model: PatchModel, patchset: PatchSet) -> np.ndarray:
    """One eval-mode embedding per training patch, order preserving."""
    if patchset.window != model.w or patchset.n_channels != model.d:
        raise InputError(
            f"patch dims ({patchset.window}, {patchset.n_channels}) do not match "
            f"model dims ({model.w}, {model.d})"
        )
    return model.encode_batched(patchset.values)


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clip the tiny negatives cancellation can produce
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * (x @ centroids.T)
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=x.dtype)
    centroids[0] = x[rng.integers(n)]
    closest = _squared_distances(x, centroids[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[i] = x[rng.integers(n)]
        else:
            centroids[i] = x[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, _squared_distances(x, centroids[i : i + 1])[:, 0])
    return centroids


def kmeans(vectors: np.ndarray, k: int, max_iters: int = 50, seed: int = 0,
           inertia_history: list | None = None):
    """Lloyd's algorithm with k-means++ seeding, Euclidean metric.

    Runs until the assignment is a fixed point or ``max_iters`` passes.
    Empty clusters are re-seeded from the point farthest from its assigned
    centroid. Deterministic given the seed. Returns (centroids, assignments).
    ``inertia_history``, when given, collects the inertia after each
    assignment step.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    assignments = np.full(n, -1)
    for _ in range(max_iters):
        d2 = _squared_distances(x, centroids)
        new_assignments = d2.argmin(axis=1)
        if inertia_history is not None:
            inertia_history.append(float(d2[np.arange(n), new_assignments].sum()))
        for c in range(k):
            mask = new_assignments == c
            if mask.any():
                centroids[c] = x[mask].mean(axis=0)
            else:
                farthest = d2[np.arange(n), new_assignments].argmax()
                centroids[c] = x[farthest]
                new_assignments[farthest] = c
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    return centroids, assignments


def kmeans_inertia(x: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(((x - centroids[assignments]) ** 2).sum())


def reduce_bank(bank: np.ndarray, ratio: float, seed: int = 0) -> ReducedMemoryBank:
    """Coreset of K = max(1, floor(ratio * |bank|)) cluster medoids.

    Each representative is the bank vector nearest (Euclidean) to its
    cluster centroid, ties broken by smallest bank index.
    """
    bank = np.asarray(bank)
    if bank.ndim != 2 or bank.shape[0] == 0:
        raise InputError("memory bank is empty")
    if not 0 < ratio <= 1:
        raise InputError(f"bank ratio must be in (0, 1], got {ratio}")
    n = bank.shape[0]
    k = max(1, int(ratio * n))
    centroids, assignments = kmeans(bank, k, seed=seed)
    indices = np.empty(k, dtype=np.int64)
    x = bank.astype(np.float64)
    for c in range(k):
        members = np.flatnonzero(assignments == c)
        d2 = ((x[members] - centroids[c]) ** 2).sum(axis=1)
        indices[c] = members[d2.argmin()]  # argmin keeps the smallest index on ties
    return ReducedMemoryBank(embeddings=bank[indices].copy(), source_indices=indices)


def knn(bank: ReducedMemoryBank, query: np.ndarray, k: int) -> np.ndarray:
    """The k smallest cosine distances from the query to the bank, ascending.

    k larger than the bank is clamped with a warning rather than failing.
    """
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    size = len(bank)
    if k > size:
        warnings.warn(f"k={k} exceeds bank size {size}; clamping", stacklevel=2)
        k = size
    dists = cosine_distances_to_rows(bank.embeddings, query)
    order = np.argsort(dists, kind="stable")[:k]  # stable: ties by bank index
    return dists[order]


def knn_matrix(bank: ReducedMemoryBank, queries: np.ndarray, k: int) -> np.ndarray:
    """Row-per-query version of :func:`knn`; returns (n, k) ascending distances.

    Computed one query at a time through the same canonical primitive as
    :func:`knn`, so each row is bitwise-identical to the single-query path.
    """
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    size = len(bank)
    if k > size:
        warnings.warn(f"k={k} exceeds bank size {size}; clamping", stacklevel=2)
        k = size
    out = np.empty((len(queries), k), dtype=np.float64)
    for i, q in enumerate(queries):
        dists = cosine_distances_to_rows(bank.embeddings, q)
        out[i] = np.sort(dists)[:k]
    return out
