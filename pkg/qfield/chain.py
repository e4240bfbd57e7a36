# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

"""Samplers for the stationary chain and for the periodic counterexample field"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.signal import lfilter

from qfield.config import DEFAULT_SEED
from qfield.kernel import get_kernel
from qfield.measure import get_measure
from qfield.params import GAUSSIAN, TWO_POINT, ParameterError

logger = logging.getLogger(__name__)

TWO_STATE = "TwoState"
GAUSSIAN_AR = "Gaussian"
REJECTION = "RejectionKernel"

SAFETY_FACTOR = 1.1
MAX_REJECTIONS = 10**6
BOUND_X_POINTS = 257
BOUND_Y_POINTS = 1025
MIN_BATCH = 4
MAX_BATCH = 4096
POOL_SIZE = 2**16
SUPPORT_SLACK = 1e-9

DEFAULT_REPLICATIONS = 64


class RejectionError(RuntimeError):
    pass


def seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def seed_entropy(seed):
    """The integer a run was seeded with, for reports"""
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy
    return seed


class ChainRun:
    def __init__(self, params, length, seed, values, sampler_kind, stats=None):
        self.params = params
        self.length = length
        self.seed = seed
        self.values = values
        self.sampler_kind = sampler_kind
        self.stats = stats or {}

    def __repr__(self):
        return (
            f"ChainRun(params={self.params!r}, length={self.length}, "
            f"sampler_kind={self.sampler_kind!r})"
        )

    @property
    def rho(self):
        return self.params.rho

    @property
    def q(self):
        return self.params.q

    # Interface shared with the counterexample runs, used by verify
    poly_q = q

    @property
    def series(self):
        return self.values[None, :]

    def conditional_model(self):
        p = self.params
        return p.a, p.A, p.B, p.C

    def correlation_target(self, k):
        return self.rho ** np.abs(np.asarray(k))

    @property
    def lag_one(self):
        return self.rho

    def transition_matrix(self):
        """Empirical [[P(-1->-1), P(-1->+1)], [P(+1->-1), P(+1->+1)]]"""
        if self.sampler_kind != TWO_STATE:
            raise ValueError("Transition matrix needs the two-state chain")
        frm = self.values[:-1] > 0
        to = self.values[1:] > 0
        counts = np.array(
            [
                [np.sum(~frm & ~to), np.sum(~frm & to)],
                [np.sum(frm & ~to), np.sum(frm & to)],
            ],
            dtype=float,
        )
        return counts / counts.sum(axis=1, keepdims=True)

    def within_support(self):
        if self.params.kind == GAUSSIAN:
            return True
        bound = self.params.support_halfwidth + SUPPORT_SLACK
        return bool(np.all(np.abs(self.values) <= bound))


class _Pool:
    """Draws values block by block from a generator"""

    def __init__(self, draw, size=POOL_SIZE):
        self._draw = draw
        self._size = size
        self._buf = np.empty(0)
        self._pos = 0

    def take(self, n):
        if self._pos + n > len(self._buf):
            rest = self._buf[self._pos :]
            fresh = self._draw(max(self._size, n))
            self._buf = np.concatenate([rest, fresh])
            self._pos = 0
        out = self._buf[self._pos : self._pos + n]
        self._pos += n
        return out


class EnvelopeBound:
    """Piecewise-constant bound M(x) >= sup_y K(x, y) on cells of an x grid"""

    def __init__(self, kernel, x_points=BOUND_X_POINTS, y_points=BOUND_Y_POINTS):
        self.kernel = kernel
        self.x_points = x_points
        self.y_points = y_points
        s = kernel.support_halfwidth
        self.x = np.linspace(-s, s, x_points)
        nodes = kernel.sup_bound(self.x, y_points=y_points)
        self.cells = SAFETY_FACTOR * np.maximum(nodes[:-1], nodes[1:])
        self._dx = self.x[1] - self.x[0]
        logger.debug(
            f"Envelope bound on {x_points}x{y_points} grid, max {self.cells.max():.4g}"
        )

    def __call__(self, x):
        i = int((x - self.x[0]) / self._dx)
        return self.cells[min(max(i, 0), len(self.cells) - 1)]

    def refined(self):
        return EnvelopeBound(
            self.kernel, 2 * self.x_points - 1, 2 * self.y_points - 1
        )


def _two_state(params, length, ss):
    init_rng, step_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    x0 = 1.0 if init_rng.random() < 0.5 else -1.0
    flips = step_rng.random(length - 1) < (1 - params.rho) / 2
    signs = np.concatenate([[1.0], np.where(flips, -1.0, 1.0)])
    return x0 * np.cumprod(signs), {}


def _gaussian_ar(params, length, ss):
    rng = np.random.default_rng(ss)
    e = rng.standard_normal(length)
    e[1:] *= math.sqrt(1 - params.rho**2)
    return lfilter([1.0], [1.0, -params.rho], e), {}


def _rejection(params, length, ss):
    kernel = get_kernel(params)
    measure = kernel.measure
    init_ss, prop_ss, unif_ss = ss.spawn(3)
    prop_rng = np.random.default_rng(prop_ss)
    unif_rng = np.random.default_rng(unif_ss)
    proposals = _Pool(lambda n: measure.ppf(prop_rng.random(n)))
    uniforms = _Pool(unif_rng.random)

    bound = EnvelopeBound(kernel)
    values = np.empty(length)
    values[0] = measure.sample(init_ss, 1)[0]
    drawn = 0
    refinements = 0
    n = 1
    while n < length:
        x = values[n - 1]
        m = bound(x)
        batch = min(max(int(math.ceil(1.5 * m)), MIN_BATCH), MAX_BATCH)
        rejected = 0
        while True:
            y = proposals.take(batch)
            u = uniforms.take(batch)
            drawn += batch
            ratio = kernel.row(x, y) / m
            if np.any(ratio > 1):
                refinements += 1
                logger.warning(
                    f"Kernel exceeded the envelope bound at x={x!r} "
                    f"(ratio {ratio.max():.4g}); rebuilding on a finer grid"
                )
                bound = bound.refined()
                m = bound(x)
                continue
            hits = np.flatnonzero(u < ratio)
            if len(hits):
                values[n] = y[hits[0]]
                break
            rejected += batch
            if rejected >= MAX_REJECTIONS:
                raise RejectionError(
                    f"{rejected} consecutive rejections at x={x!r}; "
                    "the envelope bound is broken"
                )
        n += 1

    stats = {
        "proposals": drawn,
        "acceptance_rate": (length - 1) / drawn if drawn else 1.0,
        "refinements": refinements,
        "bound_max": float(bound.cells.max()),
    }
    logger.debug(f"Rejection sampler stats: {stats}")
    return values, stats


def simulate_chain(params, length, seed):
    """Stationary chain X_0 ~ mu, X_{n+1} ~ K(X_n, y) mu(dy)"""
    if length < 1:
        raise ValueError("Chain length must be at least 1")
    ss = seed_sequence(seed)
    if params.kind == TWO_POINT:
        kind, sampler = TWO_STATE, _two_state
    elif params.kind == GAUSSIAN:
        kind, sampler = GAUSSIAN_AR, _gaussian_ar
    else:
        kind, sampler = REJECTION, _rejection
    logger.info(f"Simulating {length} steps of the {kind} chain for {params!r}")
    values, stats = sampler(params, length, ss)
    return ChainRun(params, length, seed, values, kind, stats)


def _check_counterexample(rho, a):
    if not math.isfinite(rho) or rho == 0 or abs(rho) >= 1:
        raise ParameterError("requires 0 < |rho| < 1", rho)
    if not (0 <= a <= 1):
        raise ParameterError("requires 0 <= a <= 1", a)


def gaussian_ar_coefficient(rho):
    """r = (1 - sqrt(1 - rho^2)) / rho

    The root of rho r^2 - 2 r + rho = 0 in (-1, 1).
    """
    return (1 - math.sqrt(1 - rho * rho)) / rho


def counterexample_conditional_constant(rho, a):
    """Constant term of E(Z_k^2 | Z_{k-1}, Z_{k+1})

    The Gaussian part contributes its two-sided conditional variance
    (1 - r^2)/(1 + r^2) = sqrt(1 - rho^2).
    """
    _check_counterexample(rho, a)
    return a * a * (1 - rho * rho) + (1 - a * a) * math.sqrt(1 - rho * rho)


class _CounterexampleModel:
    def conditional_model(self):
        alpha = self.rho / 2
        return (
            alpha,
            alpha * alpha,
            2 * alpha * alpha,
            counterexample_conditional_constant(self.rho, self.a),
        )

    def correlation_target(self, k):
        k = np.abs(np.asarray(k))
        xi = np.where(k % 2 == 0, 1.0, self.rho)
        return self.a**2 * xi + self.b**2 * self.r**k

    @property
    def lag_one(self):
        return float(self.correlation_target(1))

    # Dictionary polynomials for a field with Gaussian-like marginals
    poly_q = 1.0


class CounterexampleRun(_CounterexampleModel):
    def __init__(self, rho, a, xi_pair, values, seed):
        self.rho = rho
        self.a = a
        self.b = math.sqrt(1 - a * a)
        self.r = gaussian_ar_coefficient(rho)
        self.xi_pair = xi_pair
        self.values = values
        self.seed = seed
        self.length = len(values)

    def __repr__(self):
        return (
            f"CounterexampleRun(rho={self.rho!r}, a={self.a!r}, "
            f"length={self.length})"
        )

    @property
    def series(self):
        return self.values[None, :]

    def xi(self):
        k = np.arange(self.length)
        return np.where(k % 2 == 0, self.xi_pair[0], self.xi_pair[1])


def simulate_counterexample(rho, a, length, seed):
    """Z_k = a xi_k + b gamma_k

    xi is a frozen 2-periodic sign sequence, gamma a Gaussian AR(1).
    """
    _check_counterexample(rho, a)
    if length < 1:
        raise ValueError("Length must be at least 1")
    xi_ss, gamma_ss = seed_sequence(seed).spawn(2)
    xi_rng = np.random.default_rng(xi_ss)
    gamma_rng = np.random.default_rng(gamma_ss)

    xi0 = 1.0 if xi_rng.random() < 0.5 else -1.0
    xi1 = xi0 if xi_rng.random() < (1 + rho) / 2 else -xi0

    r = gaussian_ar_coefficient(rho)
    e = gamma_rng.standard_normal(length)
    e[1:] *= math.sqrt(1 - r * r)
    gamma = lfilter([1.0], [1.0, -r], e)

    b = math.sqrt(1 - a * a)
    k = np.arange(length)
    xi = np.where(k % 2 == 0, xi0, xi1)
    return CounterexampleRun(rho, a, (xi0, xi1), a * xi + b * gamma, seed)


class CounterexampleEnsemble(_CounterexampleModel):
    """Independent replications; the frozen xi makes time averages useless"""

    def __init__(self, rho, a, runs, seed):
        self.rho = rho
        self.a = a
        self.b = math.sqrt(1 - a * a)
        self.r = gaussian_ar_coefficient(rho)
        self.runs = runs
        self.seed = seed
        self.length = runs[0].length if runs else 0

    def __repr__(self):
        return (
            f"CounterexampleEnsemble(rho={self.rho!r}, a={self.a!r}, "
            f"reps={len(self.runs)}, length={self.length})"
        )

    @property
    def series(self):
        return np.stack([run.values for run in self.runs])

    @property
    def values(self):
        return self.series.ravel()


def _counterexample_job(args):
    return simulate_counterexample(*args)


def simulate_counterexample_ensemble(
    rho, a, length, reps=DEFAULT_REPLICATIONS, seed=DEFAULT_SEED, workers=1
):
    _check_counterexample(rho, a)
    if reps < 1:
        raise ValueError("Need at least one replication")
    children = seed_sequence(seed).spawn(reps)
    jobs = [(rho, a, length, child) for child in children]
    logger.info(f"Simulating {reps} counterexample replications of length {length}")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_counterexample_job, jobs))
    else:
        runs = [_counterexample_job(job) for job in jobs]
    return CounterexampleEnsemble(rho, a, runs, seed)
