"""Patch-embedding anomaly detection for time series.

Trains a small 1D-CNN encoder with a temporal-proximity triplet objective
plus a patch-order pretext task, stores reduced training embeddings in a
memory bank, and scores each time step by mean k-nearest-neighbor cosine
distance of its covering patches.
"""

from .bank import ReducedMemoryBank, build_bank, kmeans, knn, reduce_bank
from .detect import score_series
from .errors import CheckpointError, InputError, PatchAdError, TrainingDivergedError
from .estimator import PatchAnomalyDetector
from .io import TimeSeries, load_csv, load_scores, split, write_scores
from .metrics import MetricReport, auc_pr, auc_roc, estimate_lag, evaluate, point_f1, range_f1, vus_pr, vus_roc
from .model import PatchModel, init_model, load_checkpoint, save_checkpoint
from .patching import extract_patches, instance_normalize
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "InputError",
    "MetricReport",
    "PatchAdError",
    "PatchAnomalyDetector",
    "PatchModel",
    "ReducedMemoryBank",
    "TimeSeries",
    "TrainConfig",
    "TrainingDivergedError",
    "auc_pr",
    "auc_roc",
    "build_bank",
    "estimate_lag",
    "evaluate",
    "extract_patches",
    "init_model",
    "instance_normalize",
    "kmeans",
    "knn",
    "load_checkpoint",
    "load_csv",
    "load_scores",
    "point_f1",
    "range_f1",
    "reduce_bank",
    "save_checkpoint",
    "score_series",
    "split",
    "train",
    "vus_pr",
    "vus_roc",
    "write_scores",
]
