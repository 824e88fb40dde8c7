"""Command line interface: train, score, eval, bench, plot.

Configuration precedence: built-in defaults < config file (line-oriented
``key = value``) < command-line flags. ``--print-config`` dumps the
resolved configuration and exits. All defaults match the documented
hyperparameters; the patch length defaults to 64 for univariate and 96
for multivariate input.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as series_io
from .bank import ReducedMemoryBank, reduce_bank
from .detect import score_series
from .errors import InputError, PatchAdError
from .metrics import estimate_lag, evaluate
from .model import load_checkpoint, save_checkpoint
from .plotting import render_svg
from .train import TrainConfig, train

DEFAULTS = {
    "w": None,
    "iterations": 200,
    "minibatch": 512,
    "lr0": 1e-4,
    "weight_decay": 1e-4,
    "margin": 0.5,
    "max_offset": 2,
    "rand_pairs": 5,
    "decay_iters": 20,
    "negative_strategy": "farthest",
    "bank_ratio": 0.1,
    "k": 3,
    "seed": 0,
    "deterministic": False,
}


def _parse_value(text: str):
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip()


def _load_config_file(path) -> dict:
    resolved = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        resolved[key] = _parse_value(value)
    return resolved


def _resolve_config(args) -> dict:
    config = dict(DEFAULTS)
    if getattr(args, "config", None):
        config.update(_load_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _print_config(config: dict) -> None:
    for key in sorted(config):
        print(f"{key} = {config[key]}")


def _train_config(config: dict) -> TrainConfig:
    return TrainConfig(
        w=config["w"], iterations=config["iterations"], minibatch=config["minibatch"],
        lr0=config["lr0"], weight_decay=config["weight_decay"], margin=config["margin"],
        max_offset=config["max_offset"], rand_pairs=config["rand_pairs"],
        decay_iters=config["decay_iters"], negative_strategy=config["negative_strategy"],
        seed=config["seed"],
    )


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file with 'key = value' lines")
    parser.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration and exit")
    parser.add_argument("--w", type=int, help="patch length")
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--minibatch", type=int)
    parser.add_argument("--lr0", type=float)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--margin", type=float)
    parser.add_argument("--max-offset", dest="max_offset", type=int)
    parser.add_argument("--rand-pairs", dest="rand_pairs", type=int)
    parser.add_argument("--decay-iters", dest="decay_iters", type=int)
    parser.add_argument("--negative-strategy", dest="negative_strategy")
    parser.add_argument("--bank-ratio", dest="bank_ratio", type=float)
    parser.add_argument("--k", type=int, help="nearest neighbors for scoring")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--deterministic", action="store_const", const=True, default=None,
                        help="fix reduction order for bitwise-reproducible runs")


def _load_labels(path) -> np.ndarray:
    """Single-column 0/1 CSV; a header row or a 'label' column is accepted."""
    try:
        rows = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read labels file {path}: {exc}") from exc
    first = rows[0].split(",")[0].strip() if rows else ""
    has_header = bool(first) and not first.lstrip("+-").replace(".", "", 1).isdigit()
    series = series_io.load_csv(path, has_header=has_header)
    if series.labels is not None:
        return series.labels
    if series.n_channels != 1:
        raise InputError(f"{path}: expected a single label column")
    values = series.values[:, 0]
    if not np.isin(values, (0.0, 1.0)).all():
        raise InputError(f"{path}: labels must be 0 or 1")
    return values.astype(np.int64)


def cmd_train(args) -> int:
    config = _resolve_config(args)
    if args.print_config:
        _print_config(config)
        return 0
    series = series_io.load_csv(args.data, has_header=args.has_header)
    started = time.time()
    log_path = args.log or str(Path(args.out).with_suffix(".log.csv"))
    with open(log_path, "w", encoding="utf-8") as log_fh:
        model, bank = train(series, _train_config(config), log_fh=log_fh)
    reduced = reduce_bank(bank, config["bank_ratio"], seed=config["seed"])
    save_checkpoint(model, reduced.embeddings, args.out)
    elapsed = time.time() - started
    print(f"trained on {series.n_steps} steps: bank size {len(reduced)}, "
          f"{elapsed:.1f}s elapsed; checkpoint {args.out}, log {log_path}")
    return 0


def cmd_score(args) -> int:
    config = _resolve_config(args)
    if args.print_config:
        _print_config(config)
        return 0
    model, bank = load_checkpoint(args.model)
    series = series_io.load_csv(args.data, has_header=args.has_header)
    if series.n_channels != model.d:
        raise InputError(
            f"checkpoint expects {model.d} channels but {args.data} has {series.n_channels}"
        )
    scores = score_series(model, ReducedMemoryBank(embeddings=bank), series, config["k"])
    series_io.write_scores(scores, args.out)
    print(f"wrote {len(scores)} scores to {args.out}")
    return 0


def cmd_eval(args) -> int:
    scores = series_io.load_scores(args.scores)
    labels = _load_labels(args.labels)
    if len(scores) != len(labels):
        raise InputError(f"scores length {len(scores)} != labels length {len(labels)}")
    if args.data:
        data = series_io.load_csv(args.data, has_header=args.has_header)
        if data.n_steps != len(scores):
            raise InputError("data length does not match scores")
        lag = estimate_lag(data.values[:, 0])
    else:
        lag = estimate_lag(scores.scores)
    report = evaluate(scores.scores, labels, lag=lag)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _parse_sweeps(specs) -> list[dict]:
    """--sweep key=v1,v2 flags -> list of config override dicts (cartesian)."""
    axes = []
    for spec in specs or []:
        if "=" not in spec:
            raise InputError(f"--sweep expects key=v1,v2,..., got {spec!r}")
        key, values = spec.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise InputError(f"--sweep: unknown config key {key!r}")
        axes.append([(key, _parse_value(v)) for v in values.split(",")])
    return [dict(combo) for combo in itertools.product(*axes)] if axes else [{}]


def cmd_bench(args) -> int:
    config = _resolve_config(args)
    if args.print_config:
        _print_config(config)
        return 0
    root = Path(args.dir)
    names = sorted(p.name[: -len("_train.csv")] for p in root.glob("*_train.csv"))
    if not names:
        raise InputError(f"no *_train.csv files found in {root}")
    sweeps = _parse_sweeps(args.sweep)
    sweep_keys = sorted({k for combo in sweeps for k in combo})
    metric_cols = ["vus_pr", "vus_roc", "range_f1", "auc_pr", "auc_roc", "point_f1", "lag_L"]

    rows = []
    for combo in sweeps:
        run_cfg = {**config, **combo}
        results = []
        for name in names:
            try:
                train_series = series_io.load_csv(root / f"{name}_train.csv",
                                                  has_header=args.has_header)
                test_series = series_io.load_csv(root / f"{name}_test.csv",
                                                 has_header=args.has_header)
                labels = _load_labels(root / f"{name}_labels.csv")
                model, bank = train(train_series, _train_config(run_cfg))
                reduced = reduce_bank(bank, run_cfg["bank_ratio"], seed=run_cfg["seed"])
                scores = score_series(model, reduced, test_series, run_cfg["k"])
                lag = estimate_lag(test_series.values[:, 0])
                report = evaluate(scores.scores, labels, lag=lag)
            except PatchAdError as exc:
                print(f"skipping {name}: {exc}", file=sys.stderr)
                continue
            results.append((name, report.to_dict()))
        for name, metrics in results:
            rows.append([name] + [run_cfg[k] for k in sweep_keys]
                        + [metrics[c] for c in metric_cols])
        if results:
            rows.append(["mean"] + [run_cfg[k] for k in sweep_keys]
                        + [float(np.mean([m[c] for _, m in results])) for c in metric_cols])

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series"] + sweep_keys + metric_cols)
        writer.writerows(rows)
    print(f"wrote {len(rows)} result rows to {args.out}")
    return 0


def cmd_plot(args) -> int:
    series = series_io.load_csv(args.data, has_header=args.has_header)
    scores = series_io.load_scores(args.scores)
    labels = _load_labels(args.labels) if args.labels else None
    render_svg(series.values[:, 0], scores.scores, labels=labels, path=args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchad",
        description="Patch-embedding time-series anomaly detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("data", help="training CSV (labels, if present, are ignored)")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--log", help="training log CSV (default: alongside the checkpoint)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a series with a trained checkpoint")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--out", default="scores.csv")
    _add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="compute the six-measure report from scores + labels")
    p.add_argument("scores", help="scores CSV as written by 'score'")
    p.add_argument("labels", help="per-step 0/1 labels CSV")
    p.add_argument("--data", help="series CSV; used for lag estimation when given")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="train+score+eval every series in a directory")
    p.add_argument("dir", help="directory of NAME_train.csv / NAME_test.csv / NAME_labels.csv")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--sweep", action="append",
                   help="key=v1,v2,... override grid; repeatable (cartesian product)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render series + scores (+ labels) as SVG")
    p.add_argument("data")
    p.add_argument("scores")
    p.add_argument("--labels")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--out", default="plot.svg")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PatchAdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
