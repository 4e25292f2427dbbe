import os

import pytest

from neurotrain.bench import ExperimentRecord
from neurotrain.errors import ArgumentError, FormatError
from neurotrain.report import FAILED, NOT_SUPPORTED, MatrixReport, report_matrix, summary_text


def ok(trainer, model, dataset, acc, trial=0, best=False):
    return ExperimentRecord(trainer, model, dataset, trial=trial, best=best,
                            metrics={"test_acc": acc, "train_acc": acc + 0.01, "loss": 0.1, "param_count": 42})


def not_supported(trainer, model, dataset):
    return ExperimentRecord(trainer, model, dataset, status="not_supported", message="no")


def campaign_records():
    return [
        ok("bptt", "fc", "mnist", 0.9, trial=0),
        ok("bptt", "fc", "mnist", 0.95, trial=1, best=True),
        ok("bptt", "rc", "mnist", 0.7, best=True),
        ok("stdp", "fc", "mnist", 0.8, best=True),
        not_supported("stdp", "rc", "mnist"),
        ExperimentRecord("dfa", "fc", "mnist", trial=0, status="failed", message="NumericError: nan"),
        not_supported("dfa", "rc", "mnist"),
    ]


def all_not_supported_test():
    records = [not_supported(t, m, "shd") for t in ("stdp", "dfa") for m in ("rc", "conv")]
    report = report_matrix(records)
    assert report.trainers == ["stdp", "dfa"]
    assert report.rows == [("rc", "shd"), ("conv", "shd")]
    assert all(v == NOT_SUPPORTED for row in report.table() for v in row[2:])


def single_record_test():
    report = report_matrix([ok("bptt", "fc", "synth", 0.625, best=True)])
    assert report.table() == [["fc", "synth", "0.625"]]
    assert report.value("fc", "synth", "bptt") == 0.625


def matrix_cells_test():
    report = report_matrix(campaign_records())
    assert report.trainers == ["bptt", "stdp", "dfa"]
    assert report.value("fc", "mnist", "bptt") == 0.95
    assert report.value("rc", "mnist", "stdp") == NOT_SUPPORTED
    assert report.value("fc", "mnist", "dfa") == FAILED
    assert report_matrix(campaign_records(), "param_count").value("rc", "mnist", "bptt") == 42


def unmarked_best_falls_back_to_test_accuracy_test():
    records = [ok("bptt", "fc", "mnist", 0.9, trial=0), ok("bptt", "fc", "mnist", 0.93, trial=1)]
    records[1].metrics["loss"] = 0.05
    assert report_matrix(records, "loss").value("fc", "mnist", "bptt") == 0.05


def unknown_metric_test():
    with pytest.raises(ArgumentError) as e:
        report_matrix(campaign_records(), "energy")
    assert "test_acc" in str(e.value)


def csv_round_trip_test(tmp_path):
    report = report_matrix(campaign_records())
    filename = str(tmp_path / "matrix.csv")
    report.to_csv(filename)
    with open(filename) as f:
        assert f.readline().strip() == "model,dataset,bptt,stdp,dfa"
    assert MatrixReport.from_csv(filename) == report
    assert MatrixReport.from_csv(filename).value("rc", "mnist", "dfa") == NOT_SUPPORTED


def from_csv_rejects_other_files_test(tmp_path):
    filename = tmp_path / "other.csv"
    filename.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        MatrixReport.from_csv(str(filename))
    filename.write_text("model,dataset,bptt\nfc,mnist\n")
    with pytest.raises(FormatError):
        MatrixReport.from_csv(str(filename))


def text_table_test():
    lines = report_matrix(campaign_records()).to_text().splitlines()
    assert lines[0].split() == ["model", "dataset", "bptt", "stdp", "dfa"]
    assert set(lines[1]) <= {"-", " "}
    assert lines[3].split() == ["rc", "mnist", "0.7", NOT_SUPPORTED, NOT_SUPPORTED]


def xlsx_test(tmp_path):
    filename = str(tmp_path / "matrix.xlsx")
    report_matrix(campaign_records()).to_xlsx(filename)
    assert os.path.getsize(filename) > 0
    empty = str(tmp_path / "empty.xlsx")
    report_matrix([]).to_xlsx(empty)
    assert os.path.exists(empty)


def summary_text_test():
    records = campaign_records()
    text = summary_text(records, report_matrix(records))
    assert text.startswith("Experiments: 4 ok, 2 not supported, 1 failed")
    assert "dfa/fc/mnist trial 0: NumericError: nan" in text


def summary_lists_substituted_architectures_test():
    records = campaign_records()
    assert "Substituted architectures" not in summary_text(records, report_matrix(records))
    for trial in (0, 1):
        records.append(ExperimentRecord("stdp", "fc", "fmnist", trial=trial, best=trial == 1,
                                        metrics={"test_acc": 0.7}, model_layers=[784, 800],
                                        adapted_from=[784, 800, 10]))
    text = summary_text(records, report_matrix(records))
    assert text.count("stdp/fc/fmnist: trained 784-800 in place of 784-800-10") == 1
