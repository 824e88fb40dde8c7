"""Memory bank, k-means coreset reduction, and kNN queries."""

import numpy as np
import pytest

from patchad.bank import (ReducedMemoryBank, build_bank, kmeans, kmeans_inertia,
                          knn, knn_matrix, reduce_bank)
from patchad.errors import InputError
from patchad.model import init_model
from patchad.nn import cosine_distance, cosine_distances_to_rows
from patchad.patching import extract_patches


def _bank(rng, n=50, l=8):
    return ReducedMemoryBank(embeddings=rng.standard_normal((n, l)))


def test_build_bank_one_embedding_per_patch():
    rng = np.random.default_rng(0)
    model = init_model(1, 16, seed=0)
    ps = extract_patches(rng.standard_normal(40), 16)
    bank = build_bank(model, ps)
    assert bank.shape == (25, 64)
    np.testing.assert_array_equal(bank[3], model.encode(ps.patch(3)))


def test_build_bank_dimension_mismatch():
    model = init_model(1, 16, seed=0)
    ps = extract_patches(np.random.default_rng(0).standard_normal(40), 8)
    with pytest.raises(InputError):
        build_bank(model, ps)


def test_knn_matches_exhaustive_scan():
    rng = np.random.default_rng(1)
    for n in (1, 5, 200):
        bank = _bank(rng, n=n)
        for _ in range(10):
            q = rng.standard_normal(8)
            k = int(rng.integers(1, n + 1))
            got = knn(bank, q, k)
            # selection is exact against a full scan of the same distances
            full = cosine_distances_to_rows(bank.embeddings, q)
            np.testing.assert_array_equal(got, np.array(sorted(full.tolist()))[:k])
            # and the distances agree with the scalar definition
            brute = np.sort([cosine_distance(q, v) for v in bank.embeddings])[:k]
            np.testing.assert_allclose(got, brute, atol=1e-12)


def test_knn_matrix_matches_knn():
    rng = np.random.default_rng(2)
    bank = _bank(rng, n=30)
    queries = rng.standard_normal((9, 8))
    got = knn_matrix(bank, queries, 4)
    for i, q in enumerate(queries):
        np.testing.assert_array_equal(got[i], knn(bank, q, 4))


def test_knn_clamps_k_with_warning():
    rng = np.random.default_rng(3)
    bank = _bank(rng, n=3)
    with pytest.warns(UserWarning, match="clamping"):
        dists = knn(bank, rng.standard_normal(8), 10)
    assert dists.shape == (3,)
    with pytest.raises(InputError):
        knn(bank, rng.standard_normal(8), 0)


def test_kmeans_recovers_separated_blobs():
    rng = np.random.default_rng(4)
    blobs = np.concatenate([
        rng.standard_normal((30, 3)) * 0.1 + center
        for center in ([0, 0, 0], [10, 0, 0], [0, 10, 0])
    ])
    centroids, assignments = kmeans(blobs, 3, seed=0)
    # every blob lands in exactly one cluster
    for start in (0, 30, 60):
        labels = set(assignments[start : start + 30].tolist())
        assert len(labels) == 1
    recovered = sorted(np.round(c).astype(int).tolist() for c in centroids)
    assert recovered == [[0, 0, 0], [0, 10, 0], [10, 0, 0]]


def test_kmeans_inertia_monotone_non_increasing():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((300, 6))
    for k in (1, 5, 40):
        history: list = []
        kmeans(x, k, seed=1, inertia_history=history)
        assert len(history) >= 1
        assert all(a >= b - 1e-9 for a, b in zip(history, history[1:]))


def test_kmeans_deterministic_and_validates_k():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((40, 4))
    c1, a1 = kmeans(x, 5, seed=3)
    c2, a2 = kmeans(x, 5, seed=3)
    np.testing.assert_array_equal(c1, c2)
    np.testing.assert_array_equal(a1, a2)
    with pytest.raises(InputError):
        kmeans(x, 0)
    with pytest.raises(InputError):
        kmeans(x, 41)


def test_kmeans_handles_duplicate_points():
    # more clusters than distinct values forces the empty-cluster path
    x = np.repeat(np.eye(3), 4, axis=0)
    centroids, assignments = kmeans(x, 5, seed=0)
    assert centroids.shape == (5, 3)
    assert np.isfinite(kmeans_inertia(x, centroids, assignments))


def test_reduce_bank_cardinality_and_membership():
    rng = np.random.default_rng(7)
    bank = rng.standard_normal((137, 8))
    for ratio in (0.1, 0.33, 1.0):
        reduced = reduce_bank(bank, ratio, seed=0)
        assert len(reduced) == max(1, int(ratio * 137))
        for i, row in enumerate(reduced.embeddings):
            src = reduced.source_indices[i]
            np.testing.assert_array_equal(row, bank[src])


def test_reduce_bank_tiny_ratio_keeps_one():
    rng = np.random.default_rng(8)
    assert len(reduce_bank(rng.standard_normal((9, 4)), 0.1, seed=0)) == 1


def test_reduce_bank_deterministic():
    rng = np.random.default_rng(9)
    bank = rng.standard_normal((60, 8))
    a = reduce_bank(bank, 0.2, seed=4)
    b = reduce_bank(bank, 0.2, seed=4)
    np.testing.assert_array_equal(a.embeddings, b.embeddings)
    np.testing.assert_array_equal(a.source_indices, b.source_indices)


def test_reduce_bank_validation():
    with pytest.raises(InputError):
        reduce_bank(np.empty((0, 4)), 0.5)
    with pytest.raises(InputError):
        reduce_bank(np.ones((5, 4)), 0.0)
    with pytest.raises(InputError):
        reduce_bank(np.ones((5, 4)), 1.5)
