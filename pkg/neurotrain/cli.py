#!/usr/bin/env python3
# encoding: utf-8
# NeuroTrain command line interface

import sys
from sys import argv, exit
from dataclasses import replace
import argparse
import logging
import os

from neurotrain.bench import (CampaignSpec, CustomSpec, ExperimentRecord,
        failed_count, run_campaign, run_custom)
from neurotrain.config import load_config
from neurotrain.data import resolve_data_dir
from neurotrain.errors import ConfigError, IncompatibilityError, NeuroTrainError
from neurotrain.models import IMAGE_SHAPES, PRESETS, save_checkpoint
from neurotrain.report import METRICS, report_matrix, summary_text
from neurotrain.trainers import TRAINERS
from neurotrain.utils import (dumps_canonical, positive_int, read_jsonl,
        setup_logging, write_jsonl)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED_CELLS = 2
EXIT_INTERRUPTED = 130


def parse_commandline(argv):
    """Parse commandline arguments"""

    desc = """NeuroTrain: benchmark local learning rules for spiking neural networks."""
    parser = argparse.ArgumentParser(description=desc)
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    campaign = subparsers.add_parser("campaign",
            help="Run every trainer x model x dataset combination of a campaign config.")
    campaign.add_argument("--config", required=True, metavar="CONFIG",
            help="Campaign config file (JSON).")
    campaign.add_argument("--out", dest="out", metavar="DIR",
            default="results",
            help="Output directory [%(default)s].")
    campaign.add_argument("--data-dir", dest="data_dir", metavar="DIR",
            default=None,
            help="Dataset directory; overrides the config and $NEUROTRAIN_DATA.")
    campaign.add_argument("--parallelism", dest="parallelism", metavar="N",
            type=positive_int,
            default=None,
            help="Maximum number of concurrent experiments; overrides the config.")
    campaign.add_argument("--write-xlsx", dest="write_xlsx", metavar="XLSX_FILE",
            default="",
            help="Also write the test accuracy matrix to an Excel file.")

    run = subparsers.add_parser("run",
            help="Run a single custom experiment.")
    run.add_argument("--config", required=True, metavar="CONFIG",
            help="Custom experiment config file (JSON).")
    run.add_argument("--out", dest="out", metavar="DIR",
            default="results",
            help="Output directory [%(default)s].")
    run.add_argument("--data-dir", dest="data_dir", metavar="DIR",
            default=None,
            help="Dataset directory; overrides the config and $NEUROTRAIN_DATA.")
    run.add_argument("--measure-memory", dest="measure_memory", action="store_true",
            default=False,
            help="Measure the peak memory of the first training step of each epoch.")

    report = subparsers.add_parser("report",
            help="Print the trainer matrix of a results file.")
    report.add_argument("--results", required=True, metavar="RESULTS",
            help="results.jsonl written by the campaign command.")
    report.add_argument("--metric", dest="metric", metavar="METRIC",
            default="test_acc",
            help="Metric shown in the matrix, one of {} [%(default)s].".format(", ".join(METRICS)))
    report.add_argument("--write-xlsx", dest="write_xlsx", metavar="XLSX_FILE",
            default="",
            help="Also write the matrix to an Excel file.")

    subparsers.add_parser("presets",
            help="List the benchmark architectures per dataset.")
    subparsers.add_parser("trainers",
            help="Print the locality taxonomy of the built-in trainers.")

    devoptions = parser.add_argument_group("Developer options")
    devoptions.add_argument("--loglevel", choices=["INFO", "DEBUG", "VERBOSE"],
            default="INFO",
            help="Set logging level [%(default)s].")
    devoptions.add_argument("--logfile", dest="logfile",
            default=None,
            help="Filename for log output [no log file].")

    if len(argv) < 2:
        parser.print_help()
        return None

    options = parser.parse_args(argv[1:])
    if options.command is None:
        parser.print_help()
        return None
    setup_logging(options.loglevel, options.logfile)
    return options


def _prepare_out(out):
    os.makedirs(out, exist_ok=True)
    return out


def cmd_campaign(options):
    spec = load_config(options.config)
    if not isinstance(spec, CampaignSpec):
        raise ConfigError("expected a campaign config, got a custom one (use the run command)", "mode")
    spec = replace(spec, data_dir=resolve_data_dir(options.data_dir, spec.data_dir))
    if options.parallelism:
        spec = replace(spec, parallelism=options.parallelism)
    out = _prepare_out(options.out)
    results_file = os.path.join(out, "results.jsonl")
    if os.path.exists(results_file):
        logger.warning("Overwriting %s", results_file)

    with open(results_file, "w", encoding="utf-8") as incremental:
        def append(record):
            incremental.write(dumps_canonical(record.to_dict()) + "\n")
            incremental.flush()
        records = run_campaign(spec, on_record=append)

    write_jsonl((r.to_dict() for r in records), results_file)
    logger.info("Wrote %d records to %s", len(records), results_file)
    matrix = report_matrix(records, "test_acc")
    matrix.to_csv(os.path.join(out, "matrix.csv"))
    summary = summary_text(records, matrix)
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as f:
        f.write(summary)
    if options.write_xlsx:
        matrix.to_xlsx(options.write_xlsx)
    print(summary, file=sys.stdout, end="")
    n_failed = failed_count(records)
    if n_failed:
        logger.warning("%d experiment(s) failed", n_failed)
        return EXIT_FAILED_CELLS
    return EXIT_OK


def cmd_run(options):
    spec = load_config(options.config)
    if not isinstance(spec, CustomSpec):
        raise ConfigError("expected a custom config, got a campaign (use the campaign command)", "mode")
    spec = replace(spec, data_dir=resolve_data_dir(options.data_dir, spec.data_dir))
    out = _prepare_out(options.out)
    record, log, model = run_custom(spec, measure_memory=options.measure_memory)
    log.write(os.path.join(out, "training_log.jsonl"))
    save_checkpoint(model, os.path.join(out, "checkpoint.bin"))
    write_jsonl([record.to_dict()], os.path.join(out, "results.jsonl"))
    final = log.final
    print("{} on {}/{}: train accuracy {:.4f}, test accuracy {:.4f}".format(
        record.trainer, record.model, record.dataset, final["train_acc"], final["test_acc"]), file=sys.stdout)
    if log.measured_peak_bytes is not None:
        print("peak step memory {} bytes, {} bytes held in tapes or traces".format(
            log.measured_peak_bytes, log.peak_aux_bytes), file=sys.stdout)
    return EXIT_OK


def cmd_report(options):
    if options.metric not in METRICS:
        raise ConfigError("unknown metric '{}', valid metrics: {}".format(options.metric, ", ".join(METRICS)),
                          "--metric")
    records = [ExperimentRecord.from_dict(d) for d in read_jsonl(options.results)]
    matrix = report_matrix(records, options.metric)
    print(matrix.to_text(), file=sys.stdout, end="")
    name = "matrix.csv" if options.metric == "test_acc" else "matrix_{}.csv".format(options.metric)
    matrix.to_csv(os.path.join(os.path.dirname(os.path.abspath(options.results)), name))
    if options.write_xlsx:
        matrix.to_xlsx(options.write_xlsx)
    return EXIT_OK


def cmd_presets(options):
    print("{:<12} {:<28} {:<28} {}".format("dataset", "fc", "rc", "conv input"), file=sys.stdout)
    for dataset, sizes in PRESETS.items():
        image = IMAGE_SHAPES.get(dataset)
        print("{:<12} {:<28} {:<28} {}".format(dataset, "-".join(map(str, sizes["fc"])),
                                               "-".join(map(str, sizes["rc"])),
                                               "x".join(map(str, image)) if image else "N/S"), file=sys.stdout)
    return EXIT_OK


def cmd_trainers(options):
    header = "{:<14} {:<6} {:<6} {:<14} {:<13} {}".format("trainer", "time", "space", "supervision", "kinds",
                                                        "mechanisms")
    print(header, file=sys.stdout)
    for name, cls in TRAINERS.items():
        meta = cls.meta.to_dict()
        print("{:<14} {:<6} {:<6} {:<14} {:<13} {}".format(
            name, "yes" if meta["local_in_time"] else "no", "yes" if meta["local_in_space"] else "no",
            meta["supervision"], ",".join(meta["compatible_kinds"]), ",".join(meta["mechanisms"]) or "-"),
            file=sys.stdout)
    return EXIT_OK


COMMANDS = {
    "campaign": cmd_campaign,
    "run": cmd_run,
    "report": cmd_report,
    "presets": cmd_presets,
    "trainers": cmd_trainers,
}


def main(args=None):
    """
    Main function.

    :return:  process exit code: 0 on success, 1 on configuration, data or
            compatibility errors, 2 when some campaign experiment failed and
            130 when interrupted.
    """
    options = parse_commandline(argv if args is None else ["neurotrain"] + list(args))
    if options is None:
        return EXIT_OK
    try:
        return COMMANDS[options.command](options)
    except IncompatibilityError as e:
        logger.error("Unsupported combination: %s", e.constraint)
    except (NeuroTrainError, OSError, ValueError) as e:
        logger.error("%s", e)
    except KeyboardInterrupt:
        logger.warning("Interrupted; completed results were kept")
        return EXIT_INTERRUPTED
    return EXIT_ERROR


if __name__ == "__main__":
    exit(main())
