# encoding: utf-8
"""
Matrix reports of campaign results: rows are (model, dataset) pairs,
columns are trainers, and each cell holds the best trial's metric, "N/S" for
unsupported combinations or "ERR" when every trial failed.
"""

from collections import OrderedDict
import csv
import logging

import xlsxwriter

from neurotrain.errors import ArgumentError, FormatError

logger = logging.getLogger(__name__)

METRICS = ("train_acc", "test_acc", "loss", "total_wall_ms", "wall_ms_per_epoch", "param_count",
           "peak_aux_memory_bytes", "spike_sparsity")
NOT_SUPPORTED = "N/S"
FAILED = "ERR"
MISSING = ""


class MatrixReport():
    """
    A metric matrix.

    :param metric:  one of METRICS.
    :param trainers:  column names in campaign order.
    :param rows:  list of (model, dataset) pairs in campaign order.
    :param cells:  {(model, dataset): {trainer: value}} where value is a
            number, None (no value), NOT_SUPPORTED or FAILED.
    """

    def __init__(self, metric, trainers, rows, cells):
        self.metric = metric
        self.trainers = list(trainers)
        self.rows = list(rows)
        self.cells = cells

    def value(self, model, dataset, trainer):
        return self.cells.get((model, dataset), {}).get(trainer)

    def __eq__(self, other):
        return (isinstance(other, MatrixReport) and self.metric == other.metric and
                self.trainers == other.trainers and self.rows == other.rows and
                self.table() == other.table())

    def table(self):
        """Rows of [model, dataset, value per trainer] with values as in the CSV."""
        return [[model, dataset] + [format_value(self.value(model, dataset, t)) for t in self.trainers]
                for model, dataset in self.rows]

    def to_csv(self, filename):
        with open(filename, "w", newline="", encoding="utf-8") as out:
            writer = csv.writer(out)
            writer.writerow(["model", "dataset"] + self.trainers)
            writer.writerows(self.table())
        logger.info("Wrote %s matrix to %s", self.metric, filename)

    @classmethod
    def from_csv(cls, filename, metric="test_acc"):
        with open(filename, newline="", encoding="utf-8") as f:
            lines = list(csv.reader(f))
        if not lines or lines[0][:2] != ["model", "dataset"]:
            raise FormatError("{} is not a matrix report (expected a 'model,dataset,...' header)".format(filename))
        trainers = lines[0][2:]
        rows, cells = [], OrderedDict()
        for n, line in enumerate(lines[1:], start=2):
            if len(line) != len(trainers) + 2:
                raise FormatError("{} line {} has {} fields, expected {}".format(
                    filename, n, len(line), len(trainers) + 2))
            key = (line[0], line[1])
            rows.append(key)
            cells[key] = {t: parse_value(v) for t, v in zip(trainers, line[2:])}
        return cls(metric, trainers, rows, cells)

    def to_text(self):
        """Aligned plain-text table."""
        header = ["model", "dataset"] + self.trainers
        body = self.table()
        widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
        lines = ["  ".join(str(v).ljust(w) for v, w in zip(header, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"

    def to_xlsx(self, filename):
        """Write the matrix to an Excel workbook, one sheet."""
        workbook = xlsxwriter.Workbook(filename)
        worksheet = workbook.add_worksheet(self.metric)
        bold = workbook.add_format({"bold": True})
        number = workbook.add_format({"num_format": "0.0000"})
        worksheet.write(0, 0, "Model", bold)
        worksheet.write(0, 1, "Dataset", bold)
        for col, trainer in enumerate(self.trainers, start=2):
            worksheet.write(0, col, trainer, bold)
        worksheet.set_column(0, 1, 14.0)
        worksheet.set_column(2, 1 + max(len(self.trainers), 1), 13.0)
        row = 0
        for row, (model, dataset) in enumerate(self.rows, start=1):
            worksheet.write(row, 0, model)
            worksheet.write(row, 1, dataset)
            for col, trainer in enumerate(self.trainers, start=2):
                value = self.value(model, dataset, trainer)
                if isinstance(value, (int, float)):
                    worksheet.write_number(row, col, value, number)
                else:
                    worksheet.write_string(row, col, format_value(value))
        if row:
            worksheet.autofilter(0, 0, row, 1 + len(self.trainers))
        else:
            logger.debug("Not applying autofilter: no rows in xlsx file")
        workbook.close()
        logger.info("Wrote %s", filename)


def format_value(value):
    if value is None:
        return MISSING
    if isinstance(value, str):
        return value
    return repr(float(value)) if isinstance(value, float) else str(value)


def parse_value(text):
    if text in (NOT_SUPPORTED, FAILED):
        return text
    if text == MISSING:
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def report_matrix(records, metric="test_acc"):
    """
    Build the metric matrix of one campaign's records.

    A supported cell shows the metric of its best trial; when no trial is
    marked best, the best test accuracy among ok trials is used. Cells whose
    trials all failed show ERR.

    :raises ArgumentError:  on an unknown metric, listing the valid ones.
    """
    if metric not in METRICS:
        raise ArgumentError("unknown metric '{}', valid metrics: {}".format(metric, ", ".join(METRICS)))
    trainers, rows = [], []
    grouped = OrderedDict()
    for record in records:
        if record.trainer not in trainers:
            trainers.append(record.trainer)
        row = (record.model, record.dataset)
        if row not in rows:
            rows.append(row)
        grouped.setdefault(record.cell_id, []).append(record)

    cells = OrderedDict((row, {}) for row in rows)
    for (trainer, model, dataset), group in grouped.items():
        cells[(model, dataset)][trainer] = cell_value(group, metric)
    return MatrixReport(metric, trainers, rows, cells)


def cell_value(group, metric):
    if any(r.status == "not_supported" for r in group):
        return NOT_SUPPORTED
    ok = [r for r in group if r.status == "ok"]
    if not ok:
        return FAILED
    marked = [r for r in ok if r.best]
    if marked:
        best = marked[0]
    else:
        best = sorted(ok, key=lambda r: (-r.metrics["test_acc"], r.trial))[0]
    return best.metrics.get(metric)


def layers_text(sizes):
    return "-".join(str(n) for n in sizes or ())


def summary_text(records, report):
    """Human-readable campaign summary: status counts followed by the matrix."""
    counts = OrderedDict((status, 0) for status in ("ok", "not_supported", "failed"))
    for record in records:
        counts[record.status] = counts.get(record.status, 0) + 1
    lines = ["Experiments: {} ok, {} not supported, {} failed".format(
        counts["ok"], counts["not_supported"], counts["failed"]), "",
        "Best-trial {} per trainer:".format(report.metric), "", report.to_text()]
    failures = [r for r in records if r.status == "failed"]
    if failures:
        lines.append("Failures:")
        for r in failures:
            lines.append("  {}/{}/{} trial {}: {}".format(r.trainer, r.model, r.dataset, r.trial, r.message))
    adapted = OrderedDict()
    for r in records:
        if r.adapted_from:
            adapted.setdefault(r.cell_id, (r.adapted_from, r.model_layers))
    if adapted:
        lines.append("Substituted architectures:")
        for (trainer, model, dataset), (requested, trained) in adapted.items():
            lines.append("  {}/{}/{}: trained {} in place of {}".format(
                trainer, model, dataset, layers_text(trained), layers_text(requested)))
    return "\n".join(lines) + "\n"
