# encoding: utf-8
# Utility functions shared by the NeuroTrain modules

import argparse
import fnmatch
import itertools
import json
import logging
import os
import time


def positive_int(value):
    """argparse type for integers >= 1."""
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError("expected an integer >= 1, got {}".format(value))
    return number


def find_files(directory, pattern):
    """
    Recursively search a dir with a glob pattern yielding paths to matching filenames.

    Results are sorted so that repeated searches visit files in the same order.

    :param directory:  Path to directory from which to start walking.
    :param pattern:  a glob pattern used select what files to find.
    :return:  yields path to each filename that matches the glob pattern.
    """
    for root, subfolders, files in sorted(os.walk(directory, followlinks=True)):
        subfolders.sort()
        for basename in sorted(files):
            if fnmatch.fnmatch(basename, pattern):
                yield os.path.join(root, basename)


def grouper(n, iterable):
    """
    Groups an iterable into n-sized chunks.

    The last chunk is shorter when the iterable does not divide evenly.

    :param n:  number of items per chunk.
    :param iterable:  an iterable to divide into chunks of size n.
    :return:  n-sized chunks from the iterable.
    """
    it = iter(iterable)
    while True:
        chunk = tuple(itertools.islice(it, n))
        if not chunk:
            return
        yield chunk


def setup_logging(loglevel="INFO", logfile=None):
    """
    Configure the root logger for command line use.

    Console output is terse; the optional logfile gets timestamps.

    :param loglevel:  "INFO", "DEBUG", "WARNING" or "VERBOSE" (everything).
    :param logfile:  path to a log file, or None to only log to the console.
    :return:  the root logger.
    """
    logger = logging.getLogger()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    if loglevel == "VERBOSE":
        logger.setLevel(0)
    else:
        logger.setLevel(loglevel)
    ch = logging.StreamHandler()
    ch.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    logger.addHandler(ch)
    if logfile:
        fh = logging.FileHandler(logfile)
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s: %(message)s"))
        logger.addHandler(fh)
    logging.info("----------========= LOGGING STARTED {} ========---------".format(time.strftime("%c")))
    return logger


def dumps_canonical(obj):
    """Serialize obj as compact JSON with sorted keys (byte-stable across runs)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(records, filename):
    """
    Write an iterable of JSON-serializable dicts as JSON-lines.

    :return:  number of lines written.
    """
    count = 0
    with open(filename, "w", encoding="utf-8") as out:
        for count, record in enumerate(records, start=1):
            out.write(dumps_canonical(record) + "\n")
    return count


def read_jsonl(filename):
    """Generator over the JSON objects of a JSON-lines file, skipping blank lines."""
    with open(filename, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def resolve_path(path, base_dir):
    """Return path unchanged when absolute, else joined onto base_dir."""
    if path is None or os.path.isabs(path) or base_dir is None:
        return path
    return os.path.normpath(os.path.join(base_dir, path))
