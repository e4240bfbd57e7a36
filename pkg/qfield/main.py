#!/usr/bin/env python
# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import argparse
import logging
import os
import sys

from qfield import __version__

# Check if this is run from a local installation
qfielddir = os.path.abspath(
    os.path.join(os.path.dirname(os.path.realpath(__file__)), "..")
)
if os.path.exists(os.path.join(qfielddir, "qfield")):
    sys.path[0:0] = [qfielddir]

import numpy as np

from qfield import chain, kernel, measure, params, qpoly, verify
from qfield.config import DEFAULT_SEED, Config
from qfield.gridspec import parse_degrees, parse_grid
from qfield.utils import atomic_write, csv_dump, dump, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _model(args):
    """ModelParams from --rho and one of --R / --q"""
    if args.R is not None:
        return params.derive_params(args.rho, args.R)
    return params.derive_params_from_q(args.rho, args.q)


def _emit(config, args, text):
    atomic_write(config.output_path(args.out), text)


def _seed(config, args):
    return config.seed if args.seed is None else args.seed


def _format(config, args, name):
    return config.output_format(name, args.format)


def _dump(config, args, name, content):
    fmt = _format(config, args, name)
    if fmt == "csv":
        raise ValueError(f"The {name} command has no csv output")
    _emit(config, args, dump(content, fmt))


def cmd_params(config, args):
    p = _model(args)
    out = p.to_dict()
    out["kind"] = p.kind
    out["boundedness"] = params.classify_boundedness(p.A, p.B, p.D, p.rho)
    out["moment_determinate"] = qpoly.is_moment_determinate(p.q)
    _dump(config, args, "params", out)
    return EXIT_OK


def cmd_poly(config, args):
    family = qpoly.PolyFamily(
        args.q,
        qpoly.ORTHONORMAL if args.orthonormal else qpoly.MONIC,
        max(qpoly.DEFAULT_MAX_DEGREE, int(args.n.max())),
    )
    values = family.evaluate_all(int(args.n.max()), args.x)
    rows = [
        (int(n), float(x), float(values[n, i]))
        for n in args.n
        for i, x in enumerate(args.x)
    ]
    _emit(config, args, csv_dump(["n", "x", "Q"], rows))
    return EXIT_OK


def _density_grid(m, x):
    if x is not None:
        return x
    if m.kind == params.GAUSSIAN:
        return np.linspace(-4, 4, 201)
    return np.linspace(-m.support_halfwidth, m.support_halfwidth, 201)


def cmd_density(config, args):
    if not (-1 < args.q < 1):
        raise params.ParameterError("requires -1 < q < 1", args.q)
    m = measure.get_measure(args.q)
    x = _density_grid(m, args.x)
    f = m.density(x)
    F = m.cdf(x)
    rows = [(float(xi), float(fi), float(Fi)) for xi, fi, Fi in zip(x, f, F)]
    _emit(config, args, csv_dump(["x", "f", "F"], rows))
    return EXIT_OK


def cmd_moments(config, args):
    _dump(config, args, "moments", measure.moments(args.q, args.n_max))
    return EXIT_OK


def cmd_kernel(config, args):
    p = _model(args)
    k = kernel.TransitionKernel(p, mode=args.method)
    residual = None
    if args.method == kernel.SERIES:
        value, err = k.series(args.x, args.y, full_output=True)
        residual = float(err)
    else:
        value = k.product(args.x, args.y)
        if args.method == kernel.CROSSCHECK and p.kind != params.GAUSSIAN:
            residual = float(abs(k.series(args.x, args.y) - value))
    out = {
        "value": float(value),
        "method": args.method,
        "truncation": k.truncation_degree,
        "residual": residual,
    }
    _dump(config, args, "kernel", out)
    return EXIT_OK


def cmd_simulate(config, args):
    p = _model(args)
    run = chain.simulate_chain(p, args.steps, _seed(config, args))
    fmt = _format(config, args, "simulate")
    if fmt == "csv":
        rows = [(i, float(v)) for i, v in enumerate(run.values)]
        _emit(config, args, csv_dump(["step", "value"], rows))
    else:
        out = {
            "schema_version": verify.SCHEMA_VERSION,
            "params": p.to_dict(),
            "seed": run.seed,
            "sampler": run.sampler_kind,
            "stats": run.stats,
            "values": run.values,
        }
        _emit(config, args, dump(out, fmt))
    return EXIT_OK


def cmd_counterexample(config, args):
    ens = chain.simulate_counterexample_ensemble(
        args.rho, args.a, args.steps, args.reps, _seed(config, args), workers=args.jobs
    )
    rows = [
        (rep, i, float(v))
        for rep, run in enumerate(ens.runs)
        for i, v in enumerate(run.values)
    ]
    _emit(config, args, csv_dump(["rep", "step", "value"], rows))
    return EXIT_OK


def cmd_verify(config, args):
    if args.counterexample:
        ens = chain.simulate_counterexample_ensemble(
            args.rho,
            args.a,
            args.steps,
            args.reps,
            _seed(config, args),
            workers=args.jobs,
        )
        report = verify.verify_counterexample(ens, k_max=args.k_max, bins=args.bins)
    else:
        if args.R is None and args.q is None:
            raise params.ParameterError("requires one of --R or --q")
        p = _model(args)
        run = chain.simulate_chain(p, args.steps, _seed(config, args))
        report = verify.verify_run(run, k_max=args.k_max, bins=args.bins)
    _dump(config, args, "verify", report.to_dict())
    if report.all_passed:
        logger.info("All checks passed")
        return EXIT_OK
    logger.error(f"Failed checks: {', '.join(report.failures)}")
    return EXIT_FAILURE


def run(config, args):
    """Run a parsed command and map errors to exit codes"""
    try:
        return args.func(config, args)
    except ValueError as e:
        # ParameterError, DegreeError, InsufficientLengthError and bad grids
        logger.error(str(e))
        return EXIT_USAGE
    except (RuntimeError, ArithmeticError) as e:
        logger.error(str(e))
        return EXIT_FAILURE


def init_logging(verbose, monochrome, log_file=None):
    level = logging.DEBUG if verbose else logging.INFO

    setup_logging(level, monochrome, log_file)

    if verbose:
        logger.debug("Verbose output")
    else:
        logger.debug("Concise output")

    if monochrome:
        logger.debug("Monochrome output")
    else:
        logger.debug("Colorful output")


def _grid(text):
    try:
        return parse_grid(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _degrees(text):
    try:
        return parse_degrees(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_model_args(parser, required=True):
    parser.add_argument("--rho", type=float, required=True, help="Lag-one correlation")
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--R", type=float, help="Scale parameter in [0, 2]")
    group.add_argument("--q", type=float, help="q in [-1, 1] (R is derived)")


def _add_output_args(parser, formats):
    parser.add_argument("--out", help="Output file (default: stdout)")
    parser.add_argument("--format", choices=formats, help="Output format")


def _add_seed_args(parser, steps):
    parser.add_argument(
        "--steps", type=int, default=steps, help=f"Number of steps (default: {steps})"
    )
    parser.add_argument(
        "--seed",
        type=int,
        help=f"Random seed (default: {DEFAULT_SEED})",
    )


def get_parser():
    parser = argparse.ArgumentParser(
        description="Stationary fields with linear conditional means and "
        "quadratic conditional variances"
    )
    subparsers = parser.add_subparsers()

    # Global actions
    parser.add_argument(
        "--version",
        help="Display the qfield version",
        action="version",
        version=__version__,
    )
    parser.add_argument(
        "--monochrome",
        help="Don't use color for messages",
        action="store_true",
        default=not sys.stderr.isatty(),
    )
    parser.add_argument("--verbose", help="More info messages", action="store_true")
    parser.add_argument("--log-file", help="Write log messages to file")

    # params subparser
    parser_params = subparsers.add_parser(
        "params", help="Derive all coefficients from (rho, R) or (rho, q)"
    )
    _add_model_args(parser_params)
    _add_output_args(parser_params, ["json", "yaml"])
    parser_params.set_defaults(func=cmd_params)

    # poly subparser
    parser_poly = subparsers.add_parser("poly", help="Evaluate q-Hermite polynomials")
    parser_poly.add_argument("--q", type=float, required=True)
    parser_poly.add_argument(
        "--n", type=_degrees, default=parse_degrees("0:5:1"), help="Degrees, e.g. 0:5:1"
    )
    parser_poly.add_argument(
        "--x", type=_grid, default=parse_grid("-2:2:9"), help="Points, e.g. -2:2:9"
    )
    parser_poly.add_argument(
        "--orthonormal", action="store_true", help="Orthonormal instead of monic"
    )
    _add_output_args(parser_poly, ["csv"])
    parser_poly.set_defaults(func=cmd_poly)

    # density subparser
    parser_density = subparsers.add_parser(
        "density", help="Density and distribution function of the q-normal law"
    )
    parser_density.add_argument("--q", type=float, required=True)
    parser_density.add_argument("--x", type=_grid, help="Points (default: the support)")
    _add_output_args(parser_density, ["csv"])
    parser_density.set_defaults(func=cmd_density)

    # moments subparser
    parser_moments = subparsers.add_parser(
        "moments", help="Moments of the q-normal law"
    )
    parser_moments.add_argument("--q", type=float, required=True)
    parser_moments.add_argument("--n-max", type=int, default=8)
    _add_output_args(parser_moments, ["json", "yaml"])
    parser_moments.set_defaults(func=cmd_moments)

    # kernel subparser
    parser_kernel = subparsers.add_parser(
        "kernel", help="Evaluate the transition kernel K(x, y)"
    )
    _add_model_args(parser_kernel)
    parser_kernel.add_argument("--x", type=float, required=True)
    parser_kernel.add_argument("--y", type=float, required=True)
    parser_kernel.add_argument(
        "--method", choices=kernel.MODES, default=kernel.CROSSCHECK
    )
    _add_output_args(parser_kernel, ["json", "yaml"])
    parser_kernel.set_defaults(func=cmd_kernel)

    # simulate subparser
    parser_simulate = subparsers.add_parser(
        "simulate", help="Simulate the stationary Markov chain"
    )
    _add_model_args(parser_simulate)
    _add_seed_args(parser_simulate, 10000)
    _add_output_args(parser_simulate, ["csv", "json", "yaml"])
    parser_simulate.set_defaults(func=cmd_simulate)

    # counterexample subparser
    parser_counter = subparsers.add_parser(
        "counterexample", help="Simulate the periodic counterexample field"
    )
    parser_counter.add_argument("--rho", type=float, required=True)
    parser_counter.add_argument("--a", type=float, default=0.8, help="Mixing weight")
    parser_counter.add_argument(
        "--reps", type=int, default=chain.DEFAULT_REPLICATIONS
    )
    parser_counter.add_argument("--jobs", type=int, default=1)
    _add_seed_args(parser_counter, 10000)
    _add_output_args(parser_counter, ["csv"])
    parser_counter.set_defaults(func=cmd_counterexample)

    # verify subparser
    parser_verify = subparsers.add_parser(
        "verify", help="Simulate and check every conditional moment identity"
    )
    _add_model_args(parser_verify, required=False)
    _add_seed_args(parser_verify, 10**6)
    parser_verify.add_argument("--k-max", type=int, default=6)
    parser_verify.add_argument(
        "--bins", type=int, help="Add a binned conditional moment table"
    )
    parser_verify.add_argument(
        "--counterexample",
        action="store_true",
        help="Verify the counterexample field instead",
    )
    parser_verify.add_argument("--a", type=float, default=0.8)
    parser_verify.add_argument(
        "--reps", type=int, default=chain.DEFAULT_REPLICATIONS
    )
    parser_verify.add_argument("--jobs", type=int, default=1)
    _add_output_args(parser_verify, ["json", "yaml"])
    parser_verify.set_defaults(func=cmd_verify)

    return parser


def parse_args(argv):
    parser = get_parser()

    args = parser.parse_args(argv)

    if hasattr(args, "func"):
        return args
    parser.print_help()
    return None


def qfield(args):
    init_logging(args.verbose, args.monochrome, args.log_file)
    config = Config()
    return run(config, args)


def main(argv=None):
    args = parse_args(sys.argv[1:] if argv is None else argv)
    if not args:
        exit(EXIT_OK)

    logger.debug("Command line arguments: " + str(sys.argv))

    exit(qfield(args))


if __name__ == "__main__":
    main()
