import csv
import logging

import pytest

from stag import main as cli
from stag.commands.train import noise_overrides
from stag.errors import ConfigError


def _rows(path):
    with path.open(newline="") as f:
        return list(csv.DictReader(f))


# ==============================
# Dispatch
# ==============================


def test_unknown_subcommand_exits_2():
    assert cli.main(["plot"]) == 2


def test_missing_subcommand_exits_2():
    assert cli.main([]) == 2


def test_unknown_flag_exits_2():
    assert cli.main(["train", "--depthh", "2"]) == 2


def test_train_dry_run_prints_manifest(capsys):
    assert cli.main(["train", "--dataset", "cora", "--noise", "normal:0.8", "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "noise.preset=stag_full" in out
    assert "noise.sigma=0.8" in out
    assert "data.dataset=cora" in out


def test_vi_train_dry_run(capsys):
    assert cli.main(["vi-train", "--dataset", "cora", "--granularity", "per_edge_per_channel", "--dry-run"]) == 0
    assert "vi.mu0=0.5" in capsys.readouterr().out


def test_config_error_exits_2(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model.width = 3\n")
    assert cli.main(["train", "--config", str(cfg), "--dry-run"]) == 2


def test_preset_without_required_parameter_exits_2():
    assert cli.main(["train", "--noise", "dropedge", "--dry-run"]) == 2


def test_unexpected_failure_exits_1(monkeypatch):
    def boom(args):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli.gradcheck, "run", boom)
    assert cli.main(["gradcheck"]) == 1


# ==============================
# --noise shorthand
# ==============================


def test_noise_shorthand():
    assert noise_overrides("delta") == {"noise.family": "delta"}
    assert noise_overrides("dropout") == {"noise.preset": "dropout"}
    assert noise_overrides("uniform:0.4") == {
        "noise.preset": "stag_full", "noise.family": "uniform", "noise.a": "0.6", "noise.b": "1.4",
    }
    assert noise_overrides("bernoulli:0.2")["noise.p_drop"] == "0.2"


def test_noise_shorthand_errors():
    with pytest.raises(ConfigError, match="unknown noise"):
        noise_overrides("gaussian")
    with pytest.raises(ConfigError, match="takes its parameters"):
        noise_overrides("dropedge:0.3")


# ==============================
# Small end-to-end runs
# ==============================


def test_gradcheck_writes_passing_rows(tmp_path):
    out = tmp_path / "grad.csv"
    assert cli.main(["gradcheck", "--out", str(out), "--fraction", "0.1"]) == 0
    rows = _rows(out)
    assert {"matmul", "spmm_mask_channel"} <= {r["case"] for r in rows}
    assert all(r["passed"] == "True" for r in rows)


def test_oversmooth_csv_shape(tmp_path):
    out = tmp_path / "energy.csv"
    argv = ["oversmooth", "--out", str(out), "--nodes", "30", "--radius", "0.4", "--layers", "6", "--runs", "2",
            "--eigvecs", "3", "--seed", "1"]
    assert cli.main(argv) == 0
    rows = _rows(out)
    assert len(rows) == 6
    assert {"layer", "deterministic_mean_energy", "normal_std_energy", "bernoulli_mean_energy"} <= set(rows[0])


def test_oversmooth_reproducible(tmp_path):
    argv = ["oversmooth", "--nodes", "25", "--radius", "0.4", "--layers", "4", "--runs", "2", "--eigvecs", "2",
            "--seed", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(argv + ["--out", str(a)]) == 0
    assert cli.main(argv + ["--out", str(b), "--workers", "2"]) == 0
    assert a.read_text() == b.read_text()


def test_multiset_table(tmp_path):
    out = tmp_path / "multiset.csv"
    assert cli.main(["multiset", "--out", str(out), "--skip-classifier"]) == 0
    table = _rows(tmp_path / "multiset_table.csv")
    stochastic = [r for r in table if r["aggregator"] == "stochastic"]
    assert len(stochastic) == 4


def test_train_on_synthetic_graph(tmp_path):
    out = tmp_path / "train.csv"
    argv = ["train", "--dataset", "synthetic", "--noise", "normal:0.5", "--runs", "2", "--epochs", "3",
            "--patience", "0", "--hidden", "8", "--mc-samples", "2", "--seed", "0", "--out", str(out)]
    assert cli.main(argv) == 0
    rows = _rows(out)
    assert [r["run"] for r in rows] == ["0", "1", "summary"]
    assert len(_rows(tmp_path / "train_epochs.csv")) == 6
    assert (tmp_path / "train.manifest").exists()


def test_missing_dataset_exits_2(tmp_path, monkeypatch):
    monkeypatch.setattr(cli.settings, "data_dir", str(tmp_path))
    assert cli.main(["train", "--dataset", "cora", "--epochs", "1", "--patience", "0",
                     "--out", str(tmp_path / "x.csv")]) == 2


# ==============================
# Logging
# ==============================


def test_configure_logging_replaces_handlers(tmp_path):
    log_file = tmp_path / "stag.log"
    cli.configure_logging("debug", str(log_file))
    cli.configure_logging("warning", str(log_file))
    logger = logging.getLogger("stag")
    assert len(logger.handlers) == 2
    assert logger.level == logging.WARNING
    logger.warning("written to file")
    for handler in logger.handlers:
        handler.flush()
    assert "written to file" in log_file.read_text()
    cli.configure_logging("info", "")
    assert len(logger.handlers) == 1


def test_log_level_from_settings(monkeypatch):
    monkeypatch.setattr(cli.settings, "log_level", "ERROR")
    monkeypatch.setattr(cli.settings, "log_file", "")
    cli.configure_logging()
    assert logging.getLogger("stag").level == logging.ERROR
    cli.configure_logging("info")
