from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pytest

import cli.bench as bench_cli
import cli.segment as segment_cli
from cli.kcut import dispatch
from cli.segment import parse_args, run_pipeline
from tensor_io import LabelMask, Tensor, write_npy, write_pgm


@pytest.fixture(autouse=True)
def quiet_logger(monkeypatch: pytest.MonkeyPatch) -> None:
    logger = logging.getLogger("kcut.tests.cli")
    monkeypatch.setattr(segment_cli, "setup_logger", lambda *args, **kwargs: logger)
    monkeypatch.setattr(bench_cli, "setup_logger", lambda *args, **kwargs: logger)


def _write_inputs(tmp_path: Path) -> tuple[Path, Path]:
    grid = np.zeros((8, 8, 2), dtype=np.float32)
    grid[:, :4, 0] = 1.0
    grid[:, 4:, 1] = 1.0
    features = tmp_path / "features.npy"
    write_npy(Tensor(grid.reshape(64, 2)), features)

    labels = np.zeros((16, 16), dtype=np.int64)
    labels[:, 8:] = 1
    gt = tmp_path / "gt.pgm"
    write_pgm(LabelMask(labels), gt)
    return features, gt


def test_segment_prints_miou(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    features, gt = _write_inputs(tmp_path)
    out = tmp_path / "mask.pgm"

    code = run_pipeline(
        ["--features", str(features), "--out", str(out), "--gt", str(gt), "--k", "2", "--out-h", "16", "--out-w", "16"]
    )

    assert code == 0
    assert capsys.readouterr().out.strip() == "miou=1.000000"
    assert out.exists()
    assert out.with_suffix(".json").exists()


def test_segment_without_features_is_a_usage_error(tmp_path: Path) -> None:
    assert run_pipeline(["--out", str(tmp_path / "mask.pgm")]) == 2


def test_depth_requires_rgb(tmp_path: Path) -> None:
    features, _ = _write_inputs(tmp_path)

    with pytest.raises(SystemExit) as excinfo:
        parse_args(["--features", str(features), "--out", "m.pgm", "--depth", "d.npy"])

    assert excinfo.value.code == 2
    assert run_pipeline(["--features", str(features), "--out", "m.pgm", "--depth", "d.npy"]) == 2


def test_stage_failure_exits_one(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    code = run_pipeline(["--features", str(tmp_path / "absent.npy"), "--out", str(tmp_path / "mask.pgm")])

    assert code == 1
    assert any(line.startswith("error: stage=read_features: ") for line in capsys.readouterr().err.splitlines())


def test_bad_config_exits_one(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    features, _ = _write_inputs(tmp_path)
    config = tmp_path / "config.json"
    config.write_text('{"k_clusters": 1}', encoding="utf-8")

    code = run_pipeline(["--features", str(features), "--out", str(tmp_path / "m.pgm"), "--config", str(config)])

    assert code == 1
    assert any(line.startswith("error: stage=config: ") for line in capsys.readouterr().err.splitlines())


def test_kcut_dispatches_subcommands(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert dispatch(["bench", "--n", "16", "--d", "4", "--k", "2", "--trials", "0"]) == 0
    assert capsys.readouterr().out == "trial,method,millis,ncut,clusters\n"
    assert dispatch(["launch"]) == 2


def test_bench_rejects_k_outside_range() -> None:
    assert bench_cli.run_bench(["--n", "8", "--k", "9"]) == 2
    assert bench_cli.run_bench(["--n", "8", "--k", "1"]) == 2


def test_bench_ablation_rejects_bad_geometry() -> None:
    assert bench_cli.run_bench(["--ablation", "--grid", "4", "--size", "3", "--k", "2"]) == 2
    assert bench_cli.run_bench(["--ablation", "--grid", "2", "--k", "5"]) == 2


def test_bench_ablation_writes_csv(tmp_path: Path) -> None:
    out = tmp_path / "ablation.csv"
    argv = ["--ablation", "--grid", "4", "--size", "8", "--d", "4", "--k", "2", "--trials", "1"]

    code = bench_cli.run_bench([*argv, "--t-cuts", "5", "--restarts", "1", "--out", str(out)])

    lines = out.read_text(encoding="utf-8").splitlines()
    assert code == 0
    assert lines[0] == "trial,variant,ncut,clusters,miou"
    assert len(lines) == 7


def test_cluster_count_flags_are_usage_errors(tmp_path: Path) -> None:
    features, _ = _write_inputs(tmp_path)
    base = ["--features", str(features), "--out", str(tmp_path / "m.pgm")]

    assert run_pipeline([*base, "--k", "1"]) == 2
    assert run_pipeline([*base, "--k", "0"]) == 2
    assert run_pipeline([*base, "--t-cuts", "-1"]) == 2
