# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import os

from setuptools import setup


def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


setup(
    name="qfield",
    packages=["qfield"],
    use_scm_version={
        "relative_to": __file__,
        "write_to": "qfield/version.py",
    },
    author="qfield contributors",
    description=(
        "Stationary random fields with linear conditional means and quadratic "
        "conditional variances: q-Hermite polynomials, q-normal laws, Mehler "
        "kernels and Monte Carlo verification."
    ),
    license="BSD-2-Clause",
    keywords=[
        "q-Hermite",
        "q-normal",
        "orthogonal polynomials",
        "Mehler kernel",
        "Markov chain",
        "Monte Carlo",
        "conditional moments",
    ],
    long_description=read("README.md"),
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: BSD License",
    ],
    entry_points={"console_scripts": ["qfield = qfield.main:main"]},
    setup_requires=[
        "setuptools_scm",
    ],
    install_requires=[
        "numpy>=1.17",
        "pyparsing",
        "pyyaml",
        "scipy>=1.6",
    ],
    # Supported Python versions: 3.7+
    python_requires=">=3.7, <4",
)
