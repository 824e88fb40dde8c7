"""Tests for the scikit-learn style PatchAnomalyDetector wrapper."""

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from patchad import PatchAnomalyDetector

from conftest import make_sine_series


def small_detector(**overrides):
    kwargs = dict(w=8, iterations=3, minibatch=16, decay_iters=2,
                  bank_ratio=0.5, k=2, seed=0)
    kwargs.update(overrides)
    return PatchAnomalyDetector(**kwargs)


def test_fit_returns_self_and_sets_fitted_attrs():
    series = make_sine_series(200)
    det = small_detector()
    assert det.fit(series.values) is det
    assert hasattr(det, "model_")
    assert hasattr(det, "bank_")


def test_anomaly_score_shape_and_sign():
    series = make_sine_series(200)
    det = small_detector().fit(series.values)
    scores = det.anomaly_score(series.values)
    assert scores.shape == (200,)
    assert np.all(np.isfinite(scores))
    assert np.all(scores >= 0.0)


def test_score_samples_is_negated_anomaly_score():
    series = make_sine_series(200)
    det = small_detector().fit(series.values)
    np.testing.assert_array_equal(det.score_samples(series.values),
                                  -det.anomaly_score(series.values))
    np.testing.assert_array_equal(det.decision_function(series.values),
                                  det.score_samples(series.values))


def test_unfitted_raises():
    det = small_detector()
    with pytest.raises(NotFittedError):
        det.anomaly_score(make_sine_series(50).values)


def test_accepts_1d_input():
    series = make_sine_series(200)
    det = small_detector().fit(series.values[:, 0])
    scores = det.anomaly_score(series.values)
    assert scores.shape == (200,)


def test_get_set_params_round_trip():
    det = small_detector()
    params = det.get_params()
    assert params["k"] == 2 and params["w"] == 8 and params["seed"] == 0
    det.set_params(k=5, seed=7)
    assert det.k == 5 and det.seed == 7
    # untouched params survive
    assert det.iterations == 3


def test_clone_compatible():
    from sklearn.base import clone
    det = small_detector(seed=3)
    cloned = clone(det)
    assert cloned.get_params() == det.get_params()
    assert not hasattr(cloned, "model_")


def test_same_seed_same_scores():
    series = make_sine_series(200)
    a = small_detector().fit(series.values).anomaly_score(series.values)
    b = small_detector().fit(series.values).anomaly_score(series.values)
    np.testing.assert_array_equal(a, b)


def test_detects_obvious_spike():
    series = make_sine_series(400)
    det = small_detector(iterations=10).fit(series.values)
    spiked = series.values.copy()
    spiked[300] += 5.0
    scores = det.anomaly_score(spiked)
    # the spiked region should outrank the typical score decisively
    assert scores[295:305].max() > 3 * np.median(scores)
