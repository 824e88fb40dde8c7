"""Training loop: minibatch sampling, triplet + pretext losses, AdamW.

Per iteration: sample anchors, pick positives (small random temporal
shifts), mine the farthest in-batch negative per anchor in embedding
space, optionally pair each anchor with its preceding patch and random
batch patches for the consecutiveness pretext task, then take one AdamW
step on the combined loss with a cosine-annealed learning rate. The
pretext weight decays linearly to zero over the first ``decay_iters``
iterations; once it reaches zero the classifier head is neither run nor
updated. Labels are never read here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .bank import build_bank
from .errors import InputError, TrainingDivergedError
from .io import TimeSeries
from .model import PatchModel
from .patching import extract_patches

PROB_CLAMP = 1e-7
NEGATIVE_STRATEGIES = ("farthest", "closest", "median", "random")  # only farthest in v1

LOG_HEADER = "iter,lr,lambda,triplet_loss,pretext_loss,total_loss"


@dataclass
class TrainConfig:
    w: int | None = None          # patch length; None = 64 univariate / 96 multivariate
    iterations: int = 200
    minibatch: int = 512
    lr0: float = 1e-4
    weight_decay: float = 1e-4
    margin: float = 0.5
    max_offset: int = 2           # positive patches are shifted by up to this many steps
    rand_pairs: int = 5           # random pairs per anchor for the pretext task
    decay_iters: int = 20
    negative_strategy: str = "farthest"
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.minibatch < 2:
            raise InputError("iterations must be >= 1 and minibatch >= 2")
        if self.lr0 <= 0 or self.weight_decay < 0 or self.margin < 0:
            raise InputError("lr0 must be positive; weight decay and margin non-negative")
        if self.max_offset < 1 or self.rand_pairs < 1:
            raise InputError("max_offset and rand_pairs must be >= 1")
        if self.decay_iters < 1:
            raise InputError("decay_iters must be >= 1")
        if self.negative_strategy not in NEGATIVE_STRATEGIES:
            raise InputError(f"unknown negative strategy {self.negative_strategy!r}")
        if self.negative_strategy != "farthest":
            raise InputError(
                f"negative strategy {self.negative_strategy!r} is reserved but not implemented"
            )
        if self.w is not None and self.w < 8:
            raise InputError(f"patch length must be >= 8, got {self.w}")

    def resolve_window(self, d: int) -> int:
        return self.w if self.w is not None else (64 if d == 1 else 96)


def sample_minibatch(n_patches: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """M patch indices, uniform with replacement."""
    if n_patches < 2:
        raise InputError("minibatch sampling needs at least 2 patches")
    return rng.integers(0, n_patches, size=m)


def select_positive(n_patches: int, anchor_start: int, r: int,
                    rng: np.random.Generator) -> int | None:
    """Start of a patch shifted by a nonzero offset in [-r, r]; None if no valid shift."""
    if r < 1:
        raise InputError(f"max offset must be >= 1, got {r}")
    offsets = [s for s in range(-r, r + 1)
               if s != 0 and 0 <= anchor_start + s < n_patches]
    if not offsets:
        return None
    return anchor_start + offsets[rng.integers(len(offsets))]


def select_negative(embeddings: np.ndarray, i: int) -> int:
    """Index of the batch embedding farthest (cosine) from embedding i."""
    if embeddings.shape[0] < 2:
        raise InputError("negative mining needs a batch of at least 2")
    dists = nn.cosine_distance_matrix(embeddings[i : i + 1], embeddings)[0]
    dists[i] = -np.inf
    return int(dists.argmax())  # argmax keeps the smallest index on ties


def select_negatives(embeddings: np.ndarray) -> np.ndarray:
    """Farthest in-batch negative for every row at once."""
    if embeddings.shape[0] < 2:
        raise InputError("negative mining needs a batch of at least 2")
    dists = nn.cosine_distance_matrix(embeddings, embeddings)
    np.fill_diagonal(dists, -np.inf)
    return dists.argmax(axis=1)


def select_preceding(anchor_start: int, w: int) -> int | None:
    """Start of the patch ending right where the anchor begins, if it exists."""
    start = anchor_start - w
    return start if start >= 0 else None


def triplet_hinge(d_pos, d_neg, margin: float):
    """max(0, d_pos - d_neg + margin), elementwise."""
    return np.maximum(0.0, np.asarray(d_pos) - np.asarray(d_neg) + margin)


def triplet_loss(z: np.ndarray, z_pos: np.ndarray, z_neg: np.ndarray, margin: float) -> float:
    """Batch-mean margin hinge on cosine distances in projection space."""
    d_pos = nn.cosine_distance_rowwise(np.atleast_2d(z), np.atleast_2d(z_pos))
    d_neg = nn.cosine_distance_rowwise(np.atleast_2d(z), np.atleast_2d(z_neg))
    return float(triplet_hinge(d_pos, d_neg, margin).mean())


def pretext_loss(p_pre: np.ndarray, p_rand: np.ndarray) -> float:
    """-log p_pre - mean log(1 - p_rand), averaged over anchors.

    ``p_pre`` is (n,), ``p_rand`` is (n, U); probabilities are clamped to
    [1e-7, 1 - 1e-7] before the logs.
    """
    p_pre = np.clip(np.atleast_1d(p_pre), PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_rand = np.clip(np.atleast_2d(p_rand), PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_anchor = -np.log(p_pre) - np.log(1.0 - p_rand).mean(axis=1)
    return float(per_anchor.mean())


def lambda_schedule(iteration: int, decay_iters: int) -> float:
    """Linear decay of the pretext weight from 1 to 0 over decay_iters."""
    if iteration < 0:
        raise InputError(f"iteration must be >= 0, got {iteration}")
    return max(0.0, 1.0 - iteration / decay_iters)


def _sample_rand_pairs(m: int, anchor_positions: np.ndarray, u: int,
                       rng: np.random.Generator) -> np.ndarray:
    """(n, u) batch positions != the anchor's own position."""
    out = np.empty((len(anchor_positions), u), dtype=np.int64)
    replace = m < u + 1
    for row, i in enumerate(anchor_positions):
        others = np.concatenate([np.arange(i), np.arange(i + 1, m)])
        out[row] = rng.choice(others, size=u, replace=replace)
    return out


@dataclass
class IterationStats:
    iteration: int
    lr: float
    lam: float
    triplet: float
    pretext: float

    @property
    def total(self) -> float:
        return self.triplet + self.lam * self.pretext

    def log_line(self) -> str:
        return (f"{self.iteration},{self.lr:.9g},{self.lam:.9g},"
                f"{self.triplet:.9g},{self.pretext:.9g},{self.total:.9g}")


def train(series, config: TrainConfig, log_fh=None) -> tuple[PatchModel, np.ndarray]:
    """Train on a (presumed anomaly-free) series; returns (model, full memory bank)."""
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    d = values.shape[1]
    w = config.resolve_window(d)
    r = config.max_offset
    if values.shape[0] < w + r:
        raise InputError(
            f"training needs at least w + r = {w + r} steps, got {values.shape[0]}"
        )
    patchset = extract_patches(values, w)
    n = len(patchset)
    m = config.minibatch
    u = config.rand_pairs

    model = PatchModel(d=d, w=w, seed=config.seed)
    optimizer = nn.AdamW(model.params(), weight_decay=config.weight_decay)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))

    if log_fh is not None:
        log_fh.write(LOG_HEADER + "\n")

    for it in range(config.iterations):
        lr = nn.cosine_lr(it, config.iterations, config.lr0)
        lam = lambda_schedule(it, config.decay_iters)

        anchors = sample_minibatch(n, m, rng)
        pos = np.empty(m, dtype=np.int64)
        for i in range(m):
            p = select_positive(n, int(anchors[i]), r, rng)
            while p is None:  # reject anchors with no valid shift, resample
                anchors[i] = rng.integers(0, n)
                p = select_positive(n, int(anchors[i]), r, rng)
            pos[i] = p

        use_pretext = lam > 0.0
        if use_pretext:
            pre_starts = anchors - w
            pre_mask = pre_starts >= 0
            pre_idx = pre_starts[pre_mask]
        else:
            pre_mask = np.zeros(m, dtype=bool)
            pre_idx = np.empty(0, dtype=np.int64)
        n_pre = len(pre_idx)

        batch_idx = np.concatenate([anchors, pos, pre_idx])
        h_all = model.encode(patchset.values[batch_idx], train=True)
        h_a = h_all[:m]
        h_p = h_all[m : 2 * m]
        h_pre = h_all[2 * m :]

        neg = select_negatives(h_a)

        z_all = model.project(np.concatenate([h_a, h_p, h_a[neg]]), train=True)
        z_a, z_p, z_n = z_all[:m], z_all[m : 2 * m], z_all[2 * m :]
        d_pos = nn.cosine_distance_rowwise(z_a, z_p)
        d_neg = nn.cosine_distance_rowwise(z_a, z_n)
        hinge = triplet_hinge(d_pos, d_neg, config.margin)
        loss_tri = float(hinge.mean())

        active = (hinge > 0).astype(z_all.dtype) / m
        ga1, gp = nn.cosine_distance_rowwise_grad(z_a, z_p, active)
        ga2, gn = nn.cosine_distance_rowwise_grad(z_a, z_n, -active)
        dz = np.concatenate([ga1 + ga2, gp, gn]).astype(z_all.dtype)
        dh_proj = model.projection_backward(dz)
        dh_a = dh_proj[:m].copy()
        dh_p = dh_proj[m : 2 * m]
        np.add.at(dh_a, neg, dh_proj[2 * m :])

        loss_pre = 0.0
        dh_pre = np.zeros_like(h_pre)
        if use_pretext and n_pre > 0:
            pre_anchor_pos = np.flatnonzero(pre_mask)
            rand = _sample_rand_pairs(m, pre_anchor_pos, u, rng)
            anchor_rows = np.concatenate([pre_anchor_pos, np.repeat(pre_anchor_pos, u)])
            cand = np.concatenate([h_pre, h_a[rand.ravel()]])
            probs = model.classify_pairs(h_a[anchor_rows], cand, train=True)
            p_pre = probs[:n_pre]
            p_rand = probs[n_pre:].reshape(n_pre, u)
            loss_pre = pretext_loss(p_pre, p_rand)

            cp = np.clip(p_pre, PROB_CLAMP, 1.0 - PROB_CLAMP)
            cr = np.clip(p_rand, PROB_CLAMP, 1.0 - PROB_CLAMP)
            dp_pre = -1.0 / cp / n_pre
            dp_rand = (1.0 / (1.0 - cr)) / (u * n_pre)
            dp = lam * np.concatenate([dp_pre, dp_rand.ravel()])
            dcls_anchor, dcls_cand = model.classifier_backward(dp.astype(h_all.dtype))
            np.add.at(dh_a, anchor_rows, dcls_anchor)
            dh_pre = dcls_cand[:n_pre].copy()
            np.add.at(dh_a, rand.ravel(), dcls_cand[n_pre:])

        total = loss_tri + lam * loss_pre
        if not np.isfinite(total):
            raise TrainingDivergedError(it)

        model.encoder_backward(np.concatenate([dh_a, dh_p, dh_pre]))
        optimizer.step(model.collect_grads(), lr)
        model.clear_grads()

        if log_fh is not None:
            stats = IterationStats(it, lr, lam, loss_tri, loss_pre)
            log_fh.write(stats.log_line() + "\n")

    bank = build_bank(model, patchset)
    return model, bank
