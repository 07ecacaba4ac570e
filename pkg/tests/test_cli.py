import csv

import pytest

from fatsim.errors import InvariantViolation
from fatsim.federation import csv_header, phase_of
from fatsim.harness import load_checkpoint, write_config
from fatsim.harness.cli import EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT, EXIT_OK, main


@pytest.fixture
def config_file(tiny_experiment, tmp_path):
    return str(write_config(tmp_path / "tiny.env", tiny_experiment))


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_metrics(config_file, tiny_experiment, tmp_path):
    out = tmp_path / "run"
    assert main(["--quiet", "run", "--config", config_file, "--out-dir", str(out)]) == EXIT_OK
    rows = read_rows(out / "metrics.csv")
    assert rows[0] == csv_header(3)
    period = tiny_experiment.federation.alternation_period
    for row in rows[1:]:
        assert row[1] == phase_of(int(row[0]), period).value
        assert row[2] == "FAT"
    assert (out / "final.ckpt").is_file() and (out / "summary.json").is_file()


def test_run_is_identical_for_any_job_count(config_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--quiet", "run", "--config", config_file, "--out-dir", str(a), "--jobs", "1"]) == EXIT_OK
    assert main(["--quiet", "run", "--config", config_file, "--out-dir", str(b), "--jobs", "4"]) == EXIT_OK
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "final.ckpt").read_bytes() == (b / "final.ckpt").read_bytes()


def test_pretrain_then_evaluate(config_file, tmp_path):
    ckpt = tmp_path / "pre.ckpt"
    assert main(["--quiet", "pretrain", "--config", config_file, "--out", str(ckpt)]) == EXIT_OK
    assert load_checkpoint(ckpt).provenance.startswith("source=synthetic-rectangles")
    assert main(["--quiet", "evaluate", "--ckpt", str(ckpt), "--config", config_file]) == EXIT_OK
    rows = read_rows(tmp_path / "pre.dice.csv")
    assert [r[0] for r in rows] == ["class", "0", "1", "2"]


def test_export_data_then_evaluate_on_it(config_file, tmp_path):
    data_dir = tmp_path / "data"
    ckpt = tmp_path / "pre.ckpt"
    report = tmp_path / "report.csv"
    assert main(["--quiet", "export-data", "--config", config_file, "--out-dir", str(data_dir)]) == EXIT_OK
    assert main(["--quiet", "pretrain", "--config", config_file, "--out", str(ckpt)]) == EXIT_OK
    argv = ["--quiet", "evaluate", "--ckpt", str(ckpt), "--config", config_file]
    assert main(argv + ["--data", str(data_dir / "test.fatdata"), "--out", str(report)]) == EXIT_OK
    assert main(argv + ["--out", str(tmp_path / "regen.csv")]) == EXIT_OK
    # the exported test set is the one the config regenerates
    assert read_rows(report) == read_rows(tmp_path / "regen.csv")
    assert main(argv + ["--data", str(data_dir / "train.fatdata")]) == EXIT_DATA


def test_compare_writes_table(config_file, tmp_path):
    out = tmp_path / "cmp"
    argv = ["--quiet", "compare", "--config", config_file, "--out-dir", str(out), "--modes", "FAT,Centralized", "--seeds", "0"]
    assert main(argv) == EXIT_OK
    rows = read_rows(out / "comparison.csv")
    assert [r[0] for r in rows[1:]] == ["FAT", "Centralized"]


def test_bad_config_exits_with_config_code(tmp_path):
    bad = tmp_path / "bad.env"
    bad.write_text("experiment.colour=red\n", encoding="utf-8")
    assert main(["--quiet", "run", "--config", str(bad), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["--quiet", "run", "--config", str(tmp_path / "absent.env"), "--out-dir", str(tmp_path)]) == EXIT_CONFIG


@pytest.mark.parametrize(
    "extra",
    [
        ["--modes", "FAT,Nope"],
        ["--seeds", "a,b"],
        ["--seeds", "-1"],
        ["--jobs", "0"],
    ],
)
def test_bad_compare_arguments(config_file, tmp_path, extra):
    argv = ["--quiet", "compare", "--config", config_file, "--out-dir", str(tmp_path / "cmp")]
    assert main(argv + extra) == EXIT_CONFIG


def test_corrupt_checkpoint_exits_with_data_code(config_file, tmp_path):
    ckpt = tmp_path / "broken.ckpt"
    ckpt.write_bytes(b"FATCKPT1" + b"\x00" * 40)
    assert main(["--quiet", "evaluate", "--ckpt", str(ckpt), "--config", config_file]) == EXIT_DATA


def test_unwritable_output_exits_with_data_code(config_file, tmp_path):
    blocker = tmp_path / "not-a-dir"
    blocker.write_text("x", encoding="utf-8")
    assert main(["--quiet", "run", "--config", config_file, "--out-dir", str(blocker / "run")]) == EXIT_DATA

    ckpt = tmp_path / "pre.ckpt"
    assert main(["--quiet", "pretrain", "--config", config_file, "--out", str(ckpt)]) == EXIT_OK
    argv = ["--quiet", "evaluate", "--ckpt", str(ckpt), "--config", config_file, "--out", str(blocker / "dice.csv")]
    assert main(argv) == EXIT_DATA


def test_invariant_violation_exit_code(config_file, tmp_path, monkeypatch):
    def failing(history, desc):
        raise InvariantViolation("forced")

    monkeypatch.setattr("fatsim.harness.runner.check_history", failing)
    assert main(["--quiet", "run", "--config", config_file, "--out-dir", str(tmp_path / "run")]) == EXIT_INVARIANT


def test_bad_log_level(config_file, tmp_path):
    assert main(["--log-level", "LOUD", "run", "--config", config_file, "--out-dir", str(tmp_path)]) == EXIT_CONFIG
