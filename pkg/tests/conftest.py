"""Shared fixtures and numeric-check helpers for the test suite."""

from __future__ import annotations

import copy

import numpy as np
import pytest

from patchad.io import TimeSeries


def make_sine_series(n: int, period: float = 50.0, noise: float = 0.05,
                     seed: int = 0, channels: int = 1) -> TimeSeries:
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    cols = [np.sin(2 * np.pi * t / period + phase) + noise * rng.standard_normal(n)
            for phase in np.linspace(0, 1, channels)]
    return TimeSeries(values=np.column_stack(cols))


@pytest.fixture
def sine_series() -> TimeSeries:
    return make_sine_series(400)


def numeric_grad(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of scalar f at x, element by element."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Normwise relative error, robust to near-zero gradients."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


# dtype of the analytic path -> max normwise relative error against the
# float64 central-difference reference
GRAD_TOLERANCES = {np.float32: 1e-3, np.float64: 1e-6}
FD_STEP = 1e-5


def _float64_shadow(layer):
    """Copy of a layer with parameters and buffers cast to float64."""
    shadow = copy.deepcopy(layer)
    for name in shadow.params:
        shadow.params[name] = shadow.params[name].astype(np.float64)
    for name in ("running_mean", "running_var"):
        if hasattr(shadow, name):
            setattr(shadow, name, getattr(shadow, name).astype(np.float64))
    return shadow


def check_layer_gradients(layer, x: np.ndarray, rng: np.random.Generator,
                          dtype, param_names=None) -> None:
    """Check analytic gradients against a float64 central-difference reference.

    The objective is sum(forward(x) * R) for a fixed random R, so backward
    receives R as the upstream gradient. Numeric differentiation always runs
    on a float64 shadow copy; the analytic path runs in the dtype under test
    and must match within GRAD_TOLERANCES[dtype].
    """
    tol = GRAD_TOLERANCES[dtype]
    x = x.astype(dtype)
    shadow = _float64_shadow(layer)
    x64 = x.astype(np.float64)
    r = rng.standard_normal(shadow.forward(x64, train=False).shape)

    def objective() -> float:
        # train=True so the objective follows the same path backward
        # differentiates (batch statistics for batch norm).
        return float((shadow.forward(x64, train=True) * r).sum())

    layer.forward(x, train=True)
    dx = layer.backward(r.astype(dtype))

    err = relative_error(dx, numeric_grad(objective, x64, FD_STEP))
    assert err < tol, f"input grad rel err {err:.3g} >= {tol}"
    for name in param_names or layer.params:
        err = relative_error(layer.grads[name],
                             numeric_grad(objective, shadow.params[name], FD_STEP))
        assert err < tol, f"{name} grad rel err {err:.3g} >= {tol}"
