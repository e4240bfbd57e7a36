# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import yaml

try:
    from yaml import CSafeDumper as YamlDumper
    from yaml import CSafeLoader as YamlLoader
except ImportError:
    from yaml import SafeDumper as YamlDumper
    from yaml import SafeLoader as YamlLoader

logger = logging.getLogger(__name__)

# With help from:
# http://stackoverflow.com/questions/384076/how-can-i-color-python-logging-output

BLACK, RED, GREEN, YELLOW, BLUE, MAGENTA, CYAN, WHITE = range(8)

RESET_SEQ = "\033[0m"
COLOR_SEQ = "\033[1;%dm"

COLOR_MAP = {
    "CRITICAL": RED,
    "ERROR": RED,
    "WARNING": YELLOW,
    "INFO": WHITE,
    "DEBUG": WHITE,
}


class ColoredFormatter(logging.Formatter):
    def __init__(self, msg, monochrome):
        super().__init__(msg)
        self.monochrome = monochrome

    def format(self, record):
        uncolored = super().format(record)
        levelname = record.levelname
        if not self.monochrome and (levelname in COLOR_MAP):
            color_seq = COLOR_SEQ % (30 + COLOR_MAP[levelname])
            formatted = color_seq + uncolored + RESET_SEQ
        else:
            formatted = uncolored
        return formatted


def setup_logging(level, monochrome=False, log_file=None):
    """
    Utility function for setting up logging.
    """
    if log_file:
        logging.basicConfig(filename=log_file, filemode="w", level=logging.DEBUG)

    # numpy/scipy RuntimeWarnings end up in the py.warnings category
    logging.captureWarnings(True)

    def _formatwarning(message, category, filename, lineno, line=None):
        if category == FutureWarning:
            return message
        return _formatwarning_orig(message, category, filename, lineno, line)

    _formatwarning_orig = warnings.formatwarning
    warnings.formatwarning = _formatwarning

    # Log to stderr so CSV/JSON written to stdout stays clean
    ch = logging.StreamHandler(sys.stderr)
    ch.setLevel(logging.DEBUG)
    formatter = ColoredFormatter("%(levelname)s: %(message)s", monochrome)
    ch.setFormatter(formatter)
    packages = (
        "__main__",
        "qfield",
        "py.warnings",
    )
    for package in packages:
        package_logger = logging.getLogger(package)
        package_logger.addHandler(ch)
        package_logger.setLevel(level)
    logger.debug(f"Setup logging at level {level}.")


def to_builtin(value, finite=False):
    """Convert numpy scalars/arrays (possibly nested) to plain Python objects

    With finite=True, inf and nan become None.
    """
    if isinstance(value, dict):
        return {str(k): to_builtin(v, finite) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v, finite) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist(), finite)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if finite and not math.isfinite(value):
            return None
    return value


def json_dump(content):
    """Strict JSON: non-finite numbers are written as null"""
    content = to_builtin(content, finite=True)
    return json.dumps(content, indent=2, sort_keys=True, allow_nan=False) + "\n"


def yaml_dump(content, preamble=""):
    return preamble + yaml.dump(to_builtin(content), Dumper=YamlDumper)


def yaml_read(data):
    return yaml.load(data, Loader=YamlLoader)


def dump(content, fmt="json"):
    if fmt == "json":
        return json_dump(content)
    if fmt == "yaml":
        return yaml_dump(content)
    raise ValueError(f"Unsupported output format '{fmt}'")


def csv_dump(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def atomic_write(path, text):
    """Write text to path via a temporary file in the same directory

    With path None the text goes to stdout.
    """
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug(f"Wrote {path}")
