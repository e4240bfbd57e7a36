# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import logging
import os
from pathlib import Path
from typing import Mapping, Optional

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
OUTPUT_DIR_ENV = "QFIELD_OUTPUT_DIR"

# Per subcommand output format when --format is not given
DEFAULT_FORMATS = {
    "params": "json",
    "poly": "csv",
    "density": "csv",
    "moments": "json",
    "kernel": "json",
    "simulate": "csv",
    "counterexample": "csv",
    "verify": "json",
}


class Config:
    """Defaults that are not given on the command line

    There are no configuration files. The only external input is the
    QFIELD_OUTPUT_DIR environment variable, against which relative output
    paths are resolved.
    """

    def __init__(self, environ: Optional[Mapping[str, str]] = None):
        if environ is None:
            environ = os.environ
        self.seed = DEFAULT_SEED

        output_dir = environ.get(OUTPUT_DIR_ENV)
        if output_dir:
            self.output_dir = Path(output_dir).expanduser().resolve()
            logger.debug(f"Output directory from {OUTPUT_DIR_ENV}: {self.output_dir}")
        else:
            self.output_dir = None

    def output_path(self, out: Optional[os.PathLike]) -> Optional[Path]:
        """Where to write an output; None means stdout"""
        if out is None or str(out) == "-":
            return None
        out = Path(out).expanduser()
        if out.is_absolute() or self.output_dir is None:
            return out
        return self.output_dir / out

    def output_format(self, subcommand: str, requested: Optional[str] = None) -> str:
        if requested:
            return requested
        return DEFAULT_FORMATS.get(subcommand, "json")
