import json
import os

import pytest

from neurotrain.cli import EXIT_ERROR, EXIT_FAILED_CELLS, EXIT_OK, main
from neurotrain.models import load_checkpoint
from neurotrain.utils import read_jsonl


SYNTHETIC = {"tiny": {"n_classes": 2, "d": 6, "timesteps": 5, "n_train": 16, "n_test": 8, "seed": 1}}


def write_config(directory, doc, name="config.json"):
    filename = os.path.join(str(directory), name)
    with open(filename, "w") as out:
        json.dump(doc, out)
    return filename


def campaign_doc(**kwargs):
    doc = {"mode": "campaign", "trainers": ["bptt", "dfa"], "models": ["fc", "rc"], "datasets": ["tiny"],
           "epochs": 1, "trials": 1, "seed": 5, "batch_size": 8, "synthetic": SYNTHETIC}
    doc.update(kwargs)
    return doc


def custom_doc(**kwargs):
    doc = {"mode": "custom", "trainer": "ottt", "model": "fc", "dataset": "tiny", "epochs": 1,
           "hyperparams": {"lr": 0.5}, "batch_size": 8, "synthetic": SYNTHETIC}
    doc.update(kwargs)
    return doc


def no_arguments_test(capsys):
    assert main([]) == EXIT_OK
    assert "usage" in capsys.readouterr().out


def campaign_command_test(tmp_path, capsys):
    config = write_config(tmp_path, campaign_doc())
    out = str(tmp_path / "out")
    assert main(["campaign", "--config", config, "--out", out, "--write-xlsx", str(tmp_path / "m.xlsx")]) == EXIT_OK
    records = list(read_jsonl(os.path.join(out, "results.jsonl")))
    assert len(records) == 4
    assert [r["status"] for r in records].count("not_supported") == 1
    with open(os.path.join(out, "matrix.csv")) as f:
        assert f.readline().strip() == "model,dataset,bptt,dfa"
    with open(os.path.join(out, "summary.txt")) as f:
        assert f.readline().startswith("Experiments: 3 ok, 1 not supported, 0 failed")
    assert os.path.exists(str(tmp_path / "m.xlsx"))
    assert "N/S" in capsys.readouterr().out


def campaign_parallelism_changes_only_timing_test(tmp_path):
    config = write_config(tmp_path, campaign_doc())
    results = []
    for n in ("1", "3"):
        out = str(tmp_path / "out{}".format(n))
        assert main(["campaign", "--config", config, "--out", out, "--parallelism", n]) == EXIT_OK
        records = list(read_jsonl(os.path.join(out, "results.jsonl")))
        for record in records:
            for name in ("total_wall_ms", "wall_ms_per_epoch"):
                (record["metrics"] or {}).pop(name, None)
        results.append(records)
    assert results[0] == results[1]


def campaign_with_failures_test(tmp_path):
    config = write_config(tmp_path, campaign_doc(trainers=["bptt"], models=["fc"],
                                                 search_space={"bptt": {"bogus": [0.1, 0.2]}}))
    assert main(["campaign", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_FAILED_CELLS


def campaign_config_errors_test(tmp_path, caplog):
    config = write_config(tmp_path, campaign_doc(trials=0))
    assert main(["campaign", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_ERROR
    custom = write_config(tmp_path, custom_doc(), "custom.json")
    assert main(["campaign", "--config", custom, "--out", str(tmp_path / "out")]) == EXIT_ERROR
    assert main(["campaign", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR


def missing_dataset_files_test(tmp_path, monkeypatch):
    monkeypatch.delenv("NEUROTRAIN_DATA", raising=False)
    config = write_config(tmp_path, campaign_doc(datasets=["mnist"], trainers=["bptt"], models=["fc"]))
    out = str(tmp_path / "out")
    assert main(["campaign", "--config", config, "--out", out]) == EXIT_ERROR
    assert main(["campaign", "--config", config, "--out", out, "--data-dir", str(tmp_path / "nodata")]) == EXIT_ERROR


def run_command_test(tmp_path, capsys):
    config = write_config(tmp_path, custom_doc())
    outputs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["run", "--config", config, "--out", out]) == EXIT_OK
        with open(os.path.join(out, "checkpoint.bin"), "rb") as f:
            outputs.append(f.read())
    assert outputs[0] == outputs[1]
    log = list(read_jsonl(str(tmp_path / "a" / "training_log.jsonl")))
    assert [r["epoch"] for r in log] == [0, 1]
    model = load_checkpoint(str(tmp_path / "a" / "checkpoint.bin"))
    assert model.spec.layer_sizes == (6, 64, 2)
    assert "test accuracy" in capsys.readouterr().out


def run_zero_epochs_test(tmp_path):
    config = write_config(tmp_path, custom_doc(epochs=0))
    out = str(tmp_path / "out")
    assert main(["run", "--config", config, "--out", out]) == EXIT_OK
    log = list(read_jsonl(os.path.join(out, "training_log.jsonl")))
    assert len(log) == 1 and log[0]["epoch"] == 0


def run_unsupported_test(tmp_path, caplog):
    config = write_config(tmp_path, custom_doc(trainer="dfa", model="rc"))
    assert main(["run", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_ERROR
    assert not os.path.exists(str(tmp_path / "out" / "checkpoint.bin"))


def report_command_test(tmp_path, capsys):
    config = write_config(tmp_path, campaign_doc())
    out = tmp_path / "out"
    assert main(["campaign", "--config", config, "--out", str(out)]) == EXIT_OK
    os.remove(str(out / "matrix.csv"))
    capsys.readouterr()
    assert main(["report", "--results", str(out / "results.jsonl")]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0].split() == ["model", "dataset", "bptt", "dfa"]
    assert (out / "matrix.csv").exists()
    assert main(["report", "--results", str(out / "results.jsonl"), "--metric", "param_count"]) == EXIT_OK
    assert (out / "matrix_param_count.csv").exists()
    assert main(["report", "--results", str(out / "results.jsonl"), "--metric", "energy"]) == EXIT_ERROR


@pytest.mark.parametrize("command", ["presets", "trainers"])
def listing_commands_test(command, capsys):
    assert main([command]) == EXIT_OK
    text = capsys.readouterr().out
    assert ("shd" if command == "presets" else "perturbation") in text


def run_measure_memory_test(tmp_path, capsys):
    config = write_config(tmp_path, custom_doc())
    out = str(tmp_path / "out")
    assert main(["run", "--config", config, "--out", out, "--measure-memory"]) == EXIT_OK
    record, = read_jsonl(os.path.join(out, "results.jsonl"))
    assert record["metrics"]["measured_peak_bytes"] > 0
    assert "peak step memory" in capsys.readouterr().out


def run_rejects_sltt_steps_beyond_timesteps_test(tmp_path):
    config = write_config(tmp_path, custom_doc(trainer="sltt", hyperparams={"k_steps": 6}))
    assert main(["run", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_ERROR
