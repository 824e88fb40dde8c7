"""Minimal differentiable kernels for the patch model.

Only the operations the model needs: same-padded 1D convolution, batch
norm, ReLU, global average pooling, linear, sigmoid, plus cosine distance,
AdamW and the cosine learning-rate schedule. Each layer caches what its
backward pass needs on forward(train=True); backward returns the input
gradient and accumulates parameter gradients in ``layer.grads``.

Model arithmetic is float32 by default; every layer accepts dtype=float64
so gradient checks can run in a high-precision shadow path.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError

ZERO_NORM_TOL = 1e-12


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B, C, w) -> (C*k, B*w) column matrix of same-padded k-windows."""
    b, c, w = x.shape
    pad = (k - 1) // 2
    xp = np.zeros((b, c, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad : pad + w] = x
    cols = sliding_window_view(xp, k, axis=2)  # (B, C, w, k)
    return np.ascontiguousarray(cols.transpose(1, 3, 0, 2)).reshape(c * k, b * w)


def _correlate(x: np.ndarray, weight: np.ndarray, cols: np.ndarray | None = None):
    """Same-padded stride-1 cross-correlation; returns (y, cols)."""
    b, _, w = x.shape
    c_out, c_in, k = weight.shape
    if cols is None:
        cols = _im2col(x, k)
    y = weight.reshape(c_out, c_in * k) @ cols
    return y.reshape(c_out, b, w).transpose(1, 0, 2), cols


class Conv1d:
    """Same-padded stride-1 1D convolution (cross-correlation, no kernel flip)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if kernel_size % 2 != 1:
            raise InputError(f"kernel size must be odd, got {kernel_size}")
        rng = rng or np.random.default_rng()
        bound = 1.0 / math.sqrt(in_channels * kernel_size)
        self.params = {
            "weight": rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size)).astype(dtype),
            "bias": np.zeros(out_channels, dtype=dtype),
        }
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        w = self.params["weight"]
        if x.ndim != 3 or x.shape[1] != w.shape[1]:
            raise InputError(f"conv1d expected (B, {w.shape[1]}, w) input, got {x.shape}")
        y, cols = _correlate(x, w)
        y += self.params["bias"][None, :, None]
        if train:
            self._cache = (cols, x.shape)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols, x_shape = self._cache
        b, _, w = x_shape
        weight = self.params["weight"]
        c_out, c_in, k = weight.shape
        pad = (k - 1) // 2
        dyf = np.ascontiguousarray(dy.transpose(1, 0, 2)).reshape(c_out, b * w)
        self.grads["bias"] = dy.sum(axis=(0, 2))
        self.grads["weight"] = (dyf @ cols.T).reshape(c_out, c_in, k)
        # input gradient: one GEMM into column space, then fold the k taps
        # back onto the padded time axis (col2im)
        dcols = weight.reshape(c_out, c_in * k).T @ dyf
        blocks = dcols.reshape(c_in, k, b, w)
        dxp = np.zeros((c_in, b, w + 2 * pad), dtype=dy.dtype)
        for j in range(k):
            dxp[:, :, j : j + w] += blocks[:, j]
        self._cache = None
        return dxp[:, :, pad : pad + w].transpose(1, 0, 2)


class BatchNorm1d:
    """Per-channel batch normalization over the batch and time axes."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.params = {
            "gamma": np.ones(channels, dtype=dtype),
            "beta": np.zeros(channels, dtype=dtype),
        }
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        gamma = self.params["gamma"][None, :, None]
        beta = self.params["beta"][None, :, None]
        if train:
            b, _, w = x.shape
            if b * w < 2:
                raise InputError("batchnorm train mode needs at least 2 samples per channel")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
            m = self.momentum
            self.running_mean += m * (mean - self.running_mean)
            self.running_var += m * (var - self.running_var)
            self._cache = (xhat, inv_std, b * w)
            return gamma * xhat + beta
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        return gamma * ((x - self.running_mean[None, :, None]) * inv_std[None, :, None]) + beta

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, n = self._cache
        gamma = self.params["gamma"]
        self.grads["gamma"] = (dy * xhat).sum(axis=(0, 2))
        self.grads["beta"] = dy.sum(axis=(0, 2))
        dxhat = dy * gamma[None, :, None]
        s1 = dxhat.sum(axis=(0, 2))[None, :, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
        dx = (inv_std[None, :, None] / n) * (n * dxhat - s1 - xhat * s2)
        self._cache = None
        return dx


class ReLU:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._mask = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        y = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = dy * self._mask
        self._mask = None
        return dx


class GlobalAvgPool:
    """(B, C, w) -> (B, C) mean over the time axis."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._width = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if train:
            self._width = x.shape[2]
        return x.mean(axis=2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        w = self._width
        self._width = None
        return np.repeat(dy[:, :, None] / w, w, axis=2)


class Linear:
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        bound = 1.0 / math.sqrt(in_features)
        self.params = {
            "weight": rng.uniform(-bound, bound, (out_features, in_features)).astype(dtype),
            "bias": np.zeros(out_features, dtype=dtype),
        }
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        w = self.params["weight"]
        if x.ndim != 2 or x.shape[1] != w.shape[1]:
            raise InputError(f"linear expected (B, {w.shape[1]}) input, got {x.shape}")
        if train:
            self._cache = x
        return x @ w.T + self.params["bias"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._cache
        self.grads["weight"] = dy.T @ x
        self.grads["bias"] = dy.sum(axis=0)
        self._cache = None
        return dy @ self.params["weight"]


class Sigmoid:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._y = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        if train:
            self._y = y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        y = self._y
        self._y = None
        return dy * y * (1.0 - y)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b) in [0, 2]; defined as 1 if either norm is ~0."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < ZERO_NORM_TOL or nb < ZERO_NORM_TOL:
        return 1.0
    return float(1.0 - (a @ b) / (na * nb))


def cosine_distances_to_rows(mat: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine distance from one query vector to every row of a matrix.

    This is the canonical scoring-path primitive: a fixed matrix-vector
    product whose result depends only on (mat, query), so any caller —
    batched or one query at a time — gets bitwise-identical distances.
    (BLAS matrix-matrix products do not have that property row by row.)
    """
    m = np.asarray(mat, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64).ravel()
    mn = np.linalg.norm(m, axis=1)
    qn = np.linalg.norm(q)
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = 1.0 - (m @ q) / (mn * qn)
    dist[(mn < ZERO_NORM_TOL) | (qn < ZERO_NORM_TOL)] = 1.0
    return dist


def cosine_distance_matrix(queries: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances, (n, l) x (m, l) -> (n, m)."""
    q = np.asarray(queries, dtype=np.float64)
    m = np.asarray(bank, dtype=np.float64)
    qn = np.linalg.norm(q, axis=1)
    mn = np.linalg.norm(m, axis=1)
    sims = q @ m.T
    denom = qn[:, None] * mn[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = 1.0 - sims / denom
    zero = (qn[:, None] < ZERO_NORM_TOL) | (mn[None, :] < ZERO_NORM_TOL)
    dist[zero] = 1.0
    return dist


def cosine_distance_rowwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance between matching rows of two (n, l) matrices."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    dots = np.einsum("ij,ij->i", a, b)
    denom = na * nb
    zero = (na < ZERO_NORM_TOL) | (nb < ZERO_NORM_TOL)
    safe = np.where(zero, 1.0, denom)
    return np.where(zero, 1.0, 1.0 - dots / safe)


def cosine_distance_rowwise_grad(a: np.ndarray, b: np.ndarray, ddist: np.ndarray):
    """Gradients of rowwise cosine distance w.r.t. both inputs.

    Rows with a ~zero norm on either side have constant distance 1, hence
    zero gradient.
    """
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    dots = np.einsum("ij,ij->i", a, b)
    zero = (na < ZERO_NORM_TOL) | (nb < ZERO_NORM_TOL)
    na_s = np.where(zero, 1.0, na)
    nb_s = np.where(zero, 1.0, nb)
    # d dist / da = -(b / (|a||b|) - (a.b) a / (|a|^3 |b|))
    coef = ddist * ~zero
    da = -(b / (na_s * nb_s)[:, None] - (dots / (na_s ** 3 * nb_s))[:, None] * a) * coef[:, None]
    db = -(a / (na_s * nb_s)[:, None] - (dots / (na_s * nb_s ** 3))[:, None] * b) * coef[:, None]
    return da, db


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict.

    Parameters absent from a step's gradient dict are left untouched (no
    decay, no moment update), so heads that receive no gradient stay
    bit-identical.
    """

    def __init__(self, params: dict[str, np.ndarray], weight_decay: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = {k: 0 for k in params}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            p = self.params[name]
            g = g.astype(p.dtype, copy=False)
            p -= lr * self.weight_decay * p
            self.t[name] += 1
            t = self.t[name]
            m = self.m[name]
            v = self.v[name]
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


def cosine_lr(iteration: int, total: int, lr0: float) -> float:
    """Cosine annealing from lr0 down to lr0/10 at the final iteration."""
    if not 0 <= iteration <= total:
        raise InputError(f"iteration {iteration} outside [0, {total}]")
    lr_min = lr0 / 10.0
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * iteration / total))
