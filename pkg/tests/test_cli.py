"""End-to-end tests of the command line interface via cli.main()."""

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from patchad import load_scores
from patchad.cli import main

from conftest import make_sine_series

FAST = ["--w", "8", "--iterations", "3", "--minibatch", "16",
        "--decay-iters", "2", "--bank-ratio", "0.5", "--k", "2"]


def write_series_csv(path, values):
    values = np.atleast_2d(np.asarray(values, dtype=np.float64).T).T
    lines = [",".join(f"{v:.9f}" for v in row) for row in values]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_labels_csv(path, labels):
    path.write_text("\n".join(str(int(v)) for v in labels) + "\n", encoding="utf-8")


@pytest.fixture()
def workdir(tmp_path):
    series = make_sine_series(300)
    write_series_csv(tmp_path / "train.csv", series.values[:200, 0])
    write_series_csv(tmp_path / "test.csv", series.values[200:, 0])
    labels = np.zeros(100, dtype=np.int64)
    labels[40:45] = 1
    write_labels_csv(tmp_path / "labels.csv", labels)
    return tmp_path


def run_pipeline(workdir):
    ckpt = workdir / "model.ckpt"
    scores = workdir / "scores.csv"
    assert main(["train", str(workdir / "train.csv"), "--out", str(ckpt)] + FAST) == 0
    assert main(["score", str(ckpt), str(workdir / "test.csv"),
                 "--out", str(scores), "--k", "2"]) == 0
    return ckpt, scores


def test_train_writes_checkpoint_and_log(workdir, capsys):
    ckpt, _ = run_pipeline(workdir)
    assert ckpt.exists()
    log = workdir / "model.log.csv"
    assert log.exists()
    header = log.read_text(encoding="utf-8").splitlines()[0]
    assert header.split(",")[0] == "iter"


def test_score_round_trip(workdir):
    _, scores_path = run_pipeline(workdir)
    scores = load_scores(scores_path)
    assert len(scores) == 100
    assert np.all(np.isfinite(scores.scores))


def test_eval_prints_and_writes_report(workdir, capsys):
    _, scores_path = run_pipeline(workdir)
    out = workdir / "report.json"
    assert main(["eval", str(scores_path), str(workdir / "labels.csv"),
                 "--data", str(workdir / "test.csv"), "--out", str(out)]) == 0
    out_text = capsys.readouterr().out
    report = json.loads(out_text[out_text.index("{"):])
    for key in ("vus_pr", "vus_roc", "range_f1", "auc_pr", "auc_roc",
                "point_f1", "lag_L"):
        assert key in report
    assert json.loads(out.read_text(encoding="utf-8")) == report


def test_plot_writes_svg(workdir):
    _, scores_path = run_pipeline(workdir)
    out = workdir / "plot.svg"
    assert main(["plot", str(workdir / "test.csv"), str(scores_path),
                 "--labels", str(workdir / "labels.csv"), "--out", str(out)]) == 0
    ET.fromstring(out.read_text(encoding="utf-8"))


def test_bench_runs_and_reports_mean(workdir, tmp_path):
    bench_dir = tmp_path / "bench"
    bench_dir.mkdir()
    series = make_sine_series(300)
    for name in ("alpha", "beta"):
        write_series_csv(bench_dir / f"{name}_train.csv", series.values[:200, 0])
        write_series_csv(bench_dir / f"{name}_test.csv", series.values[200:, 0])
        labels = np.zeros(100, dtype=np.int64)
        labels[10:15] = 1
        write_labels_csv(bench_dir / f"{name}_labels.csv", labels)
    out = tmp_path / "bench.csv"
    assert main(["bench", str(bench_dir), "--out", str(out)] + FAST) == 0
    rows = out.read_text(encoding="utf-8").splitlines()
    header = rows[0].split(",")
    assert header[0] == "series"
    body = [r.split(",") for r in rows[1:]]
    assert [r[0] for r in body] == ["alpha", "beta", "mean"]
    # mean row is the column-wise mean of the per-series rows
    for col in range(1, len(header) - 1):  # exclude lag_L (integer-valued)
        expected = np.mean([float(body[0][col]), float(body[1][col])])
        assert abs(float(body[2][col]) - expected) < 1e-9


def test_bench_sweep_produces_one_mean_per_combo(workdir, tmp_path):
    bench_dir = tmp_path / "bench"
    bench_dir.mkdir()
    series = make_sine_series(300)
    write_series_csv(bench_dir / "one_train.csv", series.values[:200, 0])
    write_series_csv(bench_dir / "one_test.csv", series.values[200:, 0])
    labels = np.zeros(100, dtype=np.int64)
    labels[10:15] = 1
    write_labels_csv(bench_dir / "one_labels.csv", labels)
    out = tmp_path / "sweep.csv"
    assert main(["bench", str(bench_dir), "--out", str(out),
                 "--sweep", "k=1,3"] + FAST) == 0
    rows = [r.split(",") for r in out.read_text(encoding="utf-8").splitlines()]
    assert rows[0][:2] == ["series", "k"]
    ks = [r[1] for r in rows[1:] if r[0] == "mean"]
    assert ks == ["1", "3"]


def test_print_config_resolution_order(workdir, capsys):
    cfg = workdir / "run.cfg"
    cfg.write_text("k = 7\nmargin = 0.25  # comment\n", encoding="utf-8")
    assert main(["train", str(workdir / "train.csv"),
                 "--config", str(cfg), "--margin", "0.75",
                 "--print-config"]) == 0
    printed = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert printed["k"] == "7"          # file beats default (3)
    assert printed["margin"] == "0.75"  # flag beats file (0.25)
    assert printed["iterations"] == "200"  # untouched default
    assert list(printed) == sorted(printed)
    assert not (workdir / "model.ckpt").exists()  # print-config does not train


def test_unknown_config_key_fails(workdir, capsys):
    cfg = workdir / "bad.cfg"
    cfg.write_text("warp_factor = 9\n", encoding="utf-8")
    assert main(["train", str(workdir / "train.csv"), "--config", str(cfg)]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_missing_data_file_fails_with_stderr(tmp_path, capsys):
    assert main(["train", str(tmp_path / "nope.csv")] + FAST) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")


def test_score_channel_mismatch_fails(workdir, capsys):
    ckpt, _ = run_pipeline(workdir)
    multi = workdir / "multi.csv"
    write_series_csv(multi, np.zeros((50, 2)))
    assert main(["score", str(ckpt), str(multi), "--out",
                 str(workdir / "x.csv")]) == 1
    assert "channels" in capsys.readouterr().err


def test_eval_length_mismatch_fails(workdir, capsys):
    _, scores_path = run_pipeline(workdir)
    short = workdir / "short_labels.csv"
    write_labels_csv(short, np.zeros(10, dtype=np.int64))
    assert main(["eval", str(scores_path), str(short)]) == 1
    assert "length" in capsys.readouterr().err
