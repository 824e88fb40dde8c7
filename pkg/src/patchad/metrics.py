"""Evaluation measures: AUC-ROC/PR, Point-F1, Range-F1, VUS-ROC/PR, lag.

All threshold sweeps use the distinct score values (descending) plus a
+inf sentinel, with predictions binarized as score >= threshold. The
measures depend only on the score ordering and the label geometry, so they
are invariant under strictly increasing transforms of the scores.

The lag-tolerant VUS measures average lag-buffered areas over tolerances
0..L: for each tolerance, labels become soft weights that are 1 inside a
ground-truth segment and ramp linearly to 0 across the buffer next to it
(overlapping buffers take the max); areas are computed from the weighted
confusion masses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError

ACF_PEAK_VALUE = 0.3
ACF_PEAK_MARGIN = 0.01
DEFAULT_LAG = 100
MAX_ACF_LAG = 1000


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InputError(f"scores length {len(scores)} != labels length {len(labels)}")
    if len(scores) == 0:
        raise InputError("empty inputs")
    if not np.all(np.isfinite(scores)):
        raise InputError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise InputError("labels must be binary")
    return scores, labels.astype(np.int64)


def _require_both_classes(labels: np.ndarray) -> None:
    if labels.min() == labels.max():
        raise InputError("labels contain a single class; measure undefined")


def _threshold_counts(scores: np.ndarray, weights: np.ndarray):
    """Cumulative (weighted tp, prediction count) at each distinct threshold.

    Thresholds are the distinct score values in descending order; row k
    gives the masses for predictions score >= threshold_k.
    """
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    w = weights[order]
    # last index of each tie group = cumulative counts at that threshold
    boundary = np.flatnonzero(np.diff(s) != 0)
    ends = np.concatenate([boundary, [len(s) - 1]])
    tp = np.cumsum(w)[ends]
    npred = ends + 1
    return tp, npred


def auc_roc(scores, labels) -> float:
    """Trapezoidal area under TPR(FPR); exact pairwise-ranking statistic.

    Computed from integer confusion counts so the result is bitwise equal
    to the Mann-Whitney statistic with ties counted 1/2.
    """
    scores, labels = _validate(scores, labels)
    _require_both_classes(labels)
    tp, npred = _threshold_counts(scores, labels)
    tp = np.concatenate([[0], tp]).astype(np.int64)
    fp = np.concatenate([[0], npred]) - tp
    num = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1]), dtype=np.int64))
    p = int(labels.sum())
    n = len(labels) - p
    return num / (2 * p * n)


def _pr_points(tp: np.ndarray, npred: np.ndarray, n_pos: float):
    """(recall, precision) per threshold, prepended with the (0, 1) endpoint."""
    recall = np.concatenate([[0.0], tp / n_pos])
    precision = np.concatenate([[1.0], tp / npred])
    return recall, precision


def auc_pr(scores, labels) -> float:
    """Trapezoidal area under precision(recall); empty-prediction precision is 1."""
    scores, labels = _validate(scores, labels)
    _require_both_classes(labels)
    tp, npred = _threshold_counts(scores, labels)
    recall, precision = _pr_points(tp.astype(np.float64), npred, float(labels.sum()))
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def point_f1(scores, labels) -> float:
    """Maximum pointwise F1 over the distinct-score thresholds."""
    scores, labels = _validate(scores, labels)
    _require_both_classes(labels)
    tp, npred = _threshold_counts(scores, labels)
    n_pos = int(labels.sum())
    best = 0.0
    for t, n_hat in zip(tp, npred):
        # 2pr/(p+r) reduced to a single exact integer division:
        # 2*tp / (2*tp + fp + fn) = 2*tp / (npred + n_pos)
        best = max(best, 2.0 * t / (n_hat + n_pos))
    return best


def label_segments(labels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of 1s as (first, last) inclusive index pairs."""
    labels = np.asarray(labels).ravel()
    padded = np.concatenate([[0], labels, [0]])
    starts = np.flatnonzero(np.diff(padded) == 1)
    ends = np.flatnonzero(np.diff(padded) == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def range_f1(scores, labels) -> float:
    """Maximum segment-level F1 over the distinct-score thresholds.

    A predicted segment counts as a hit if it overlaps any ground-truth
    segment; recall is the fraction of ground-truth segments touched.
    Zero predicted segments give precision 0 by convention.
    """
    scores, labels = _validate(scores, labels)
    gt = label_segments(labels)
    if not gt:
        raise InputError("labels contain no anomaly segment")
    covered = labels.astype(bool)
    best = 0.0
    for tau in np.unique(scores)[::-1]:
        pred = label_segments(scores >= tau)
        if not pred:
            continue
        hits = sum(1 for a, b in pred if covered[a : b + 1].any())
        caught = sum(1 for a, b in gt if (scores[a : b + 1] >= tau).any())
        best = max(best, _f1(hits / len(pred), caught / len(gt)))
    return best


def estimate_lag(series_first_channel) -> int:
    """First prominent autocorrelation peak; the VUS lag tolerance.

    The peak must be a strict local maximum at lag >= 2 with ACF >= 0.3
    and prominence >= 0.01, where prominence is measured against the
    higher of the running minima on either flank (immediate-neighbor
    differences underestimate how prominent a smooth periodic peak is).
    Without such a peak, or for a constant series, the lag falls back to
    min(100, n // 4).
    """
    x = np.asarray(series_first_channel, dtype=np.float64).ravel()
    n = len(x)
    if n < 8:
        raise InputError(f"lag estimation needs at least 8 steps, got {n}")
    max_lag = min(n // 4, MAX_ACF_LAG)
    fallback = min(DEFAULT_LAG, n // 4)
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom <= 0.0:
        return fallback
    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    for lag in range(1, max_lag + 1):
        acf[lag] = float(dev[:-lag] @ dev[lag:]) / denom
    for lag in range(2, max_lag):
        if acf[lag] < ACF_PEAK_VALUE:
            continue
        if not (acf[lag] > acf[lag - 1] and acf[lag] > acf[lag + 1]):
            continue
        if _peak_prominence(acf, lag) >= ACF_PEAK_MARGIN:
            return lag
    return fallback


def _peak_prominence(acf: np.ndarray, lag: int) -> float:
    """Peak height above the higher of the flanking running minima.

    Each flank is scanned outward until a value above the peak (or the
    array edge) is reached.
    """
    left_min = acf[lag]
    for i in range(lag - 1, -1, -1):
        if acf[i] > acf[lag]:
            break
        left_min = min(left_min, acf[i])
    right_min = acf[lag]
    for i in range(lag + 1, len(acf)):
        if acf[i] > acf[lag]:
            break
        right_min = min(right_min, acf[i])
    return acf[lag] - max(left_min, right_min)


def lag_weights(labels: np.ndarray, tolerance: int) -> np.ndarray:
    """Soft labels for one lag tolerance: 1 inside segments, linear ramp outside."""
    labels = np.asarray(labels).ravel()
    w = labels.astype(np.float64)
    n = len(w)
    for a, b in label_segments(labels):
        for j in range(1, tolerance + 1):
            v = 1.0 - j / (tolerance + 1.0)
            if a - j >= 0:
                w[a - j] = max(w[a - j], v)
            if b + j < n:
                w[b + j] = max(w[b + j], v)
    return w


def _weighted_auc_roc(scores: np.ndarray, weights: np.ndarray) -> float:
    tp, npred = _threshold_counts(scores, weights)
    pw = float(weights.sum())
    nw = float(len(weights) - pw)
    if nw <= 0.0:  # buffers cover everything: every prediction is a true positive
        return 1.0
    fp = npred - tp
    tpr = np.concatenate([[0.0], tp / pw])
    fpr = np.concatenate([[0.0], fp / nw])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def _weighted_auc_pr(scores: np.ndarray, weights: np.ndarray) -> float:
    tp, npred = _threshold_counts(scores, weights)
    recall, precision = _pr_points(tp, npred, float(weights.sum()))
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def vus_roc(scores, labels, lag: int) -> float:
    """Mean lag-buffered AUC-ROC over tolerances 0..lag."""
    scores, labels = _validate(scores, labels)
    _require_both_classes(labels)
    if lag < 0:
        raise InputError(f"lag must be >= 0, got {lag}")
    areas = [_weighted_auc_roc(scores, lag_weights(labels, ell)) for ell in range(lag + 1)]
    return float(np.mean(areas))


def vus_pr(scores, labels, lag: int) -> float:
    """Mean lag-buffered AUC-PR over tolerances 0..lag."""
    scores, labels = _validate(scores, labels)
    _require_both_classes(labels)
    if lag < 0:
        raise InputError(f"lag must be >= 0, got {lag}")
    areas = [_weighted_auc_pr(scores, lag_weights(labels, ell)) for ell in range(lag + 1)]
    return float(np.mean(areas))


@dataclass
class MetricReport:
    vus_pr: float
    vus_roc: float
    range_f1: float
    auc_pr: float
    auc_roc: float
    point_f1: float
    lag_L: int

    FIELDS = ("vus_pr", "vus_roc", "range_f1", "auc_pr", "auc_roc", "point_f1")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS} | {"lag_L": self.lag_L}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(scores, labels, lag: int | None = None, lag_source=None) -> MetricReport:
    """All six measures; the lag comes from ``lag_source`` (or the scores) unless given."""
    scores, labels = _validate(scores, labels)
    if lag is None:
        source = scores if lag_source is None else lag_source
        lag = estimate_lag(source)
    return MetricReport(
        vus_pr=vus_pr(scores, labels, lag),
        vus_roc=vus_roc(scores, labels, lag),
        range_f1=range_f1(scores, labels),
        auc_pr=auc_pr(scores, labels),
        auc_roc=auc_roc(scores, labels),
        point_f1=point_f1(scores, labels),
        lag_L=int(lag),
    )
