import json
import os

import pytest

from app import EXIT_DATA, EXIT_OK, EXIT_USAGE, main, parse_config
from multipliers import available_models
from utils.database import ResultStore
from utils.errors import DomainError


def test_truth_table_to_stdout(capsys):
    assert main(["tt", "mul3x3_1"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "tt 3 3 5"
    assert len(lines) == 65
    assert lines[-1] == "29"


def test_unknown_multiplier_is_a_usage_error():
    assert main(["tt", "bogus"]) == EXIT_USAGE


def test_missing_subcommand_is_a_usage_error():
    assert main([]) == EXIT_USAGE


def test_metrics_json(capsys):
    assert main(["metrics", "mul3x3_2"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    report = payload["reports"][0]
    assert report["model_name"] == "mul3x3_2"
    assert report["med"] == 0.5
    assert any("38" in item for item in payload["provenance"]["discrepancies"])


def test_metrics_for_a_variant(capsys):
    assert main(["metrics", "--variant", "2"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["reports"][0]["model_name"] == "mul8x8_2"


def test_metrics_for_every_model_default_to_csv(tmp_path):
    out = tmp_path / "all.csv"
    assert main(["metrics", "--all", "--out", str(out), "--threads", "2"]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("model_name,")
    assert len(lines) == 1 + len(available_models())


def test_metrics_are_recorded(tmp_path, capsys):
    db = tmp_path / "results.db"
    assert main(["metrics", "mul3x3_1", "--db", str(db)]) == EXIT_OK
    capsys.readouterr()
    assert ResultStore(str(db)).list_models() == ["mul3x3_1"]


def test_export_lut(tmp_path):
    out = tmp_path / "mul8x8_1.lut"
    assert main(["export-lut", "--variant", "1", "--out", str(out)]) == EXIT_OK
    assert out.stat().st_size == 16 + 4 * 65536


def test_export_lut_needs_an_aggregated_design(tmp_path):
    assert main(["export-lut", "mul3x3_1", "--out", str(tmp_path / "x.lut")]) == EXIT_USAGE


def test_synth_writes_netlist_pla_and_cost(tmp_path):
    out = tmp_path / "mul3x3_1.v"
    assert main(["synth", "mul3x3_1", "--out", str(out)]) == EXIT_OK
    assert "module mul3x3_1(a, b, o);" in out.read_text()
    assert (tmp_path / "mul3x3_1.pla").read_text().startswith(".i 6\n")
    cost = json.loads((tmp_path / "mul3x3_1.cost.json").read_text())
    assert cost["model_name"] == "mul3x3_1"
    assert cost["outputs"][1]["published_counterexample"] == [2, 2]


def test_eval_needs_a_checkpoint(tmp_path):
    assert main(["eval", "--mnist", str(tmp_path)]) == EXIT_USAGE


def test_missing_checkpoint_is_a_data_error(tmp_path):
    assert main(["eval", "--mnist", str(tmp_path), "--checkpoint", str(tmp_path / "none.ckpt")]) == EXIT_DATA


def test_conflicting_names():
    with pytest.raises(DomainError):
        parse_config(["tt", "mul3x3_1", "--model", "mul3x3_2"])


def test_train_then_evaluate(tmp_path, synthetic_mnist):
    checkpoint = tmp_path / "lenet.ckpt"
    assert main([
        "train", "--mnist", synthetic_mnist, "--epochs", "1", "--batch-size", "32",
        "--calib-size", "50", "--out", str(checkpoint),
    ]) == EXIT_OK
    assert os.path.exists(checkpoint)

    result_path = tmp_path / "eval.json"
    assert main([
        "eval", "--mnist", synthetic_mnist, "--checkpoint", str(checkpoint),
        "--lut", "mul8x8_1", "--out", str(result_path),
    ]) == EXIT_OK
    result = json.loads(result_path.read_text())["result"]
    assert result["multiplier"] == "mul8x8_1"
    assert result["n_images"] == 50

    hist_path = tmp_path / "hist.json"
    assert main([
        "hist", "--mnist", synthetic_mnist, "--checkpoint", str(checkpoint),
        "--calib-size", "20", "--out", str(hist_path),
    ]) == EXIT_OK
    assert json.loads(hist_path.read_text())["ranges"] == [[0, 31], [96, 159]]


def test_accumulator_overflow_is_a_data_error(tmp_path, synthetic_mnist, monkeypatch):
    checkpoint = tmp_path / "lenet.ckpt"
    assert main([
        "train", "--mnist", synthetic_mnist, "--epochs", "1", "--batch-size", "32",
        "--calib-size", "50", "--out", str(checkpoint),
    ]) == EXIT_OK
    monkeypatch.setattr("dnn.lut_ops.ACC_LIMIT", 1)
    assert main(["eval", "--mnist", synthetic_mnist, "--checkpoint", str(checkpoint)]) == EXIT_DATA


def test_thread_count_comes_from_the_environment(monkeypatch):
    monkeypatch.setenv("APPROXMUL_THREADS", "3")
    assert parse_config(["tt", "mul3x3_1"]).threads == 3
    assert parse_config(["tt", "mul3x3_1", "--threads", "2"]).threads == 2


@pytest.mark.parametrize("value", ["four", "0"])
def test_bad_thread_environment_is_a_usage_error(monkeypatch, value):
    monkeypatch.setenv("APPROXMUL_THREADS", value)
    assert main(["tt", "mul3x3_1"]) == EXIT_USAGE
