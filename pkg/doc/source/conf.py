# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

#
# Configuration file for the Sphinx documentation builder.
#
# http://www.sphinx-doc.org/en/master/config

import os
import sys
from datetime import datetime

# -- Path setup --------------------------------------------------------------

sys.path.insert(0, os.path.abspath(os.path.join("..", "..")))

import qfield  # noqa: E402

# -- Project information -----------------------------------------------------

project = "qfield"
copyright = f"2024-{datetime.now().year}, qfield contributors"
author = "qfield contributors"

# The full version, including alpha/beta/rc tags.
release = qfield.__version__
# The short X.Y version.
version = ".".join(release.split(".")[:2])

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
    "sphinx.ext.intersphinx",
    "sphinx.ext.todo",
    "sphinxcontrib.programoutput",
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
}

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"
language = "en"
exclude_patterns = []
pygments_style = "sphinx"
todo_include_todos = True

# -- Options for HTML output -------------------------------------------------

try:
    import sphinx_rtd_theme  # noqa: F401

    html_theme = "sphinx_rtd_theme"
except ImportError:
    sys.stderr.write(
        "Warning: The Sphinx 'sphinx_rtd_theme' HTML theme was "
        + "not found. Make sure you have the theme installed to produce pretty "
        + "HTML output. Falling back to the default theme.\n"
    )

    html_theme = "alabaster"

html_static_path = []

htmlhelp_basename = "qfielddoc"

# -- Options for manual page output ------------------------------------------

man_pages = [(master_doc, "qfield", "qfield Documentation", [author], 1)]
