import csv
import json

import pytest
from click.testing import CliRunner

from marginsphere.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _config(tmp_path, extra="", name="run.cfg"):
    path = tmp_path / name
    path.write_text(
        "dataset.kind = moons\n"
        "dataset.n = 120\n"
        "model.hidden = 8,4\n"
        "train.max_epochs = 4\n"
        + extra
    )
    return str(path)


def _train(runner, tmp_path, extra=""):
    cfg = _config(tmp_path, extra)
    out = tmp_path / "run"
    result = runner.invoke(main, ["train", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    return cfg, out


def test_train_writes_artifacts(runner, tmp_path):
    cfg, out = _train(runner, tmp_path)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["variant"] == "imdad"
    assert 1 <= summary["stop_epoch"] <= 4
    assert "test_auc" in summary and "T" in summary
    assert (out / "model.json").exists()
    assert (out / "dataset.json").exists()
    with open(out / "epochs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "epoch"
    assert len(rows) == summary["stop_epoch"] + 1


def test_train_seed_override(runner, tmp_path):
    cfg = _config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        result = runner.invoke(
            main, ["train", "--config", cfg, "--seed", "9", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
    assert (out_a / "summary.json").read_text() == (out_b / "summary.json").read_text()


def test_eval_on_test_split(runner, tmp_path):
    cfg, out = _train(runner, tmp_path)
    eval_out = tmp_path / "eval"
    result = runner.invoke(main, [
        "eval", "--model", str(out / "model.json"),
        "--config", cfg, "--out", str(eval_out),
    ])
    assert result.exit_code == 0, result.output
    metrics = json.loads((eval_out / "metrics.json").read_text())
    assert 0.0 <= metrics["auc"] <= 1.0
    with open(eval_out / "scores.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row", "label", "score"]
    assert len(rows) == metrics["n"] + 1


def test_eval_dimension_mismatch(runner, tmp_path):
    _, out = _train(runner, tmp_path)
    other_cfg = tmp_path / "other.cfg"
    other_cfg.write_text(
        "dataset.kind = csv\n"
        f"dataset.path = {tmp_path / 'd.csv'}\n"
        "dataset.label_column = label\n"
        "dataset.normal_label = ok\n"
    )
    (tmp_path / "d.csv").write_text(
        "a,b,c,label\n" + "\n".join("1,2,3,ok" for _ in range(8))
        + "\n1,2,3,bad\n1,2,3,bad\n"
    )
    result = runner.invoke(main, [
        "eval", "--model", str(out / "model.json"),
        "--config", str(other_cfg), "--out", str(tmp_path / "e"),
        "--split", "all",
    ])
    assert result.exit_code != 0
    assert "dim" in result.output


def test_sweep_small_grid(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("MARGINSPHERE_THREADS", "2")
    cfg = _config(tmp_path, extra=(
        "split.folds = 2\n"
        "sweep.nu = 0.2,2.0\n"      # the 2.0 combos violate the nu2 bound
        "sweep.nu1 = 0.5\n"
        "sweep.nu2 = 0.6\n"
    ))
    out = tmp_path / "sweep"
    result = runner.invoke(main, ["sweep", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    payload = json.loads((out / "sweep.json").read_text())
    assert payload["n_combos"] == 1
    assert payload["best"]["nu"] == 0.2
    assert len(payload["skipped"]) == 1
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2  # one combo x two folds
    assert all(row["best"] == "1" for row in rows)


def test_sweep_all_combos_invalid(runner, tmp_path):
    cfg = _config(tmp_path, extra="sweep.nu = 1.0\nsweep.nu1 = 0.9\nsweep.nu2 = 0.5\n")
    result = runner.invoke(main, ["sweep", "--config", cfg, "--out", str(tmp_path / "s")])
    assert result.exit_code != 0


def test_ablate_ranks_variants(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("MARGINSPHERE_THREADS", "2")
    cfg = _config(tmp_path)
    out = tmp_path / "ablate"
    result = runner.invoke(main, [
        "ablate", "--config", cfg, "--seeds", "0,1", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    payload = json.loads((out / "ablation.json").read_text())
    assert set(payload["stats"]) == {"imdad", "deepsvdd", "dad", "mdad"}
    assert payload["seeds"] == [0, 1]
    assert len(payload["rank"]) == 4
    with open(out / "ablation.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 4 * 2


def test_audit_single_and_grid(runner, tmp_path):
    cfg, out = _train(runner, tmp_path)
    audit_path = tmp_path / "audit.json"
    result = runner.invoke(main, [
        "audit", "--model", str(out / "model.json"),
        "--config", cfg, "--out", str(audit_path),
    ])
    assert result.exit_code == 0, result.output
    report = json.loads(audit_path.read_text())
    assert {"ratio_normal", "bound_normal", "satisfied_normal"} <= set(report)

    grid_path = tmp_path / "grid.json"
    result = runner.invoke(main, [
        "audit", "--model", str(out / "model.json"),
        "--config", cfg, "--out", str(grid_path), "--grid",
    ])
    assert result.exit_code == 0, result.output
    grid = json.loads(grid_path.read_text())["grid"]
    assert grid and all("nu" in row and "ratio_abnormal" in row for row in grid)


def test_audit_rejects_non_imdad_model(runner, tmp_path):
    cfg, out = _train(runner, tmp_path, extra="train.variant = deepsvdd\n")
    result = runner.invoke(main, [
        "audit", "--model", str(out / "model.json"),
        "--config", cfg, "--out", str(tmp_path / "a.json"),
    ])
    assert result.exit_code != 0


def test_export_boundary_cli(runner, tmp_path):
    cfg, out = _train(runner, tmp_path)
    grid_path = tmp_path / "boundary.csv"
    result = runner.invoke(main, [
        "export-boundary", "--model", str(out / "model.json"),
        "--config", cfg, "--resolution", "12", "--out", str(grid_path),
    ])
    assert result.exit_code == 0, result.output
    with open(grid_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "score"]
    assert len(rows) == 12 * 12 + 1
