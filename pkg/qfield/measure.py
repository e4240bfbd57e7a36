# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

"""The q-normal orthogonality measure

For -1 < q < 1 the measure lives on [-s, s] with s = 2/sqrt(1-q). Writing
x = s cos(theta) the density becomes a smooth, pi-periodic function of theta,

  f(x) dx = (2 c(q) / pi) sin^2(theta) P(theta) dtheta
  P(theta) = prod_k (1 - 2 q^k cos(2 theta) + q^(2k))

which is what everything below integrates. Near |q| = 1 the product needs too
many factors and the triple product identity gives the sine series

  f(x) dx = (2 / pi) sin(theta) S(theta) dtheta
  S(theta) = sum_n (-1)^n q^(n(n+1)/2) sin((2n + 1) theta)

instead. q = 1 is the standard normal law and q = -1 the symmetric law on
{-1, +1}.
"""

import functools
import logging
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import PchipInterpolator
from scipy.linalg import eigh_tridiagonal
from scipy.special import ndtr, ndtri

from qfield.params import GAUSSIAN, QNORMAL, TWO_POINT, kind_of
from qfield.qpoly import MONIC, PolyFamily

logger = logging.getLogger(__name__)

PRODUCT_EPS = 1e-16
PRODUCT_CAP = 2048
NORMALIZATION_TOLERANCE = 1e-6

CDF_NODES = 4096
TAIL_NODES = 512
THETA_POINTS = 2**16 + 1
PPF_TOLERANCE = 1e-12
# Points times terms per sine series block
SERIES_CELLS = 2**20


def product_length(q, eps=PRODUCT_EPS, cap=PRODUCT_CAP):
    """Number of factors kept in the infinite products for this q

    Returns (count, capped).
    """
    aq = abs(q)
    if aq == 0:
        return 0, False
    if aq >= 1:
        return cap, True
    n = int(math.floor(math.log(eps) / math.log(aq))) + 1
    if n > cap:
        return cap, True
    return n, False


def series_length(q, eps=PRODUCT_EPS):
    """Number of terms of the sine series with |q|^(n(n+1)/2) >= eps"""
    aq = abs(q)
    if aq == 0:
        return 1
    L = math.log(eps) / math.log(aq)
    return int(math.floor((math.sqrt(1 + 8 * L) - 1) / 2)) + 1


class QuadratureRule:
    def __init__(self, nodes, weights, order):
        self.nodes = nodes
        self.weights = weights
        self.order = order

    def integrate(self, values):
        """Sum of weights times values, values indexed by node along the last axis"""
        return np.asarray(values) @ self.weights

    def __repr__(self):
        return f"QuadratureRule(order={self.order})"


class Measure:
    def __init__(self, q, cdf_nodes=CDF_NODES, product_cap=PRODUCT_CAP):
        if not (-1 <= q <= 1):
            raise ValueError(f"requires -1 <= q <= 1, got q={q}")
        self.q = float(q)
        self.kind = kind_of(self.q)
        self.cdf_nodes = cdf_nodes
        if self.kind == GAUSSIAN:
            self.support_halfwidth = math.inf
        else:
            self.support_halfwidth = 2 / math.sqrt(1 - self.q)

        self.product_truncation = 0
        self.series_terms = 0
        self.normalization = 1.0
        self._log_c = 0.0
        self._theta_grid = None
        if self.kind == QNORMAL:
            factors, capped = product_length(self.q, cap=product_cap)
            if capped:
                self.series_terms = series_length(self.q)
                n = np.arange(self.series_terms)
                self._series_coef = (-1.0) ** n * self.q ** (n * (n + 1) // 2)
                logger.debug(
                    f"Sine series with {self.series_terms} terms for q={self.q}"
                )
            else:
                self.product_truncation = factors
                k = np.arange(1, factors + 1)
                self._log_c = float(np.sum(np.log1p(-(self.q**k))))
            self._theta_grid = self._normalized_theta_grid()

    def __repr__(self):
        return f"Measure(q={self.q!r}, kind={self.kind!r})"

    def _log_product(self, theta):
        cos2 = np.cos(2 * theta)
        out = np.zeros_like(cos2)
        qk = 1.0
        for _ in range(self.product_truncation):
            qk *= self.q
            out += np.log1p(qk * (qk - 2 * cos2))
        return out

    def _sine_series(self, theta):
        theta = np.asarray(theta, dtype=float)
        flat = theta.ravel()
        freq = 2.0 * np.arange(self.series_terms) + 1
        out = np.empty(flat.shape)
        chunk = max(1, SERIES_CELLS // self.series_terms)
        for start in range(0, len(flat), chunk):
            sl = slice(start, start + chunk)
            out[sl] = np.sin(np.outer(flat[sl], freq)) @ self._series_coef
        return out.reshape(theta.shape)

    def _log_shape(self, theta):
        """log of pi g(theta) / (2 sin(theta)), g the density of theta"""
        if self.series_terms:
            # Rounding can leave tiny negative values in the far tails
            with np.errstate(divide="ignore"):
                log_series = np.log(np.maximum(self._sine_series(theta), 0.0))
            return self._log_c + log_series
        with np.errstate(divide="ignore"):
            log_s = np.log(np.sin(theta))
        return self._log_c + log_s + self._log_product(theta)

    def _log_theta_density(self, theta):
        """Log density of theta on [0, pi]"""
        with np.errstate(divide="ignore"):
            log_s = np.log(np.sin(theta))
        return math.log(2 / math.pi) + log_s + self._log_shape(theta)

    def _normalized_theta_grid(self):
        """theta grid with density values, renormalized when the analytic
        constant misses by more than NORMALIZATION_TOLERANCE

        Works in logs: the unnormalized density can underflow.
        """
        theta = np.linspace(0, math.pi, THETA_POINTS)
        log_g = self._log_theta_density(theta)
        peak = float(np.max(log_g))
        # Trapezoid is exact here: g is a trigonometric polynomial in 2 theta
        log_total = peak + math.log(trapezoid(np.exp(log_g - peak), theta))
        logger.debug(f"Log normalization integral for q={self.q}: {log_total!r}")
        if abs(log_total) > math.log1p(NORMALIZATION_TOLERANCE):
            logger.warning(
                f"Analytic constant for q={self.q} misses the normalization by a "
                f"factor exp({log_total:.3g}); renormalizing numerically"
            )
            self._log_c -= log_total
            log_g -= log_total
            with np.errstate(over="ignore"):
                self.normalization = float(np.exp(-log_total))
        return theta, np.exp(log_g)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == GAUSSIAN:
            return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        if self.kind == TWO_POINT:
            raise ValueError("The two-point measure has no density")
        s = self.support_halfwidth
        inside = np.abs(x) < s
        theta = np.arccos(np.clip(x / s, -1, 1))
        # f(x) = g(theta) / (s sin(theta)), written without the division
        log_f = math.log(2 / (math.pi * s)) + self._log_shape(theta)
        return np.where(inside, np.exp(log_f), 0.0)

    @functools.cached_property
    def cdf_table(self):
        """Monotone table (x, F) with F(-s) = 0 and F(s) = 1"""
        if self.kind != QNORMAL:
            raise ValueError(f"No cdf table for the {self.kind} measure")
        theta, g = self._theta_grid
        G = cumulative_trapezoid(g, theta, initial=0.0)
        G /= G[-1]
        # Symmetrize: F(-x) = 1 - F(x)
        G = 0.5 * (G + 1 - G[::-1])

        # x increases as theta decreases
        s = self.support_halfwidth
        x_fine = s * np.cos(theta[::-1])
        F_fine = 1 - G[::-1]
        x_fine[0], x_fine[-1] = -s, s
        F_fine[0], F_fine[-1] = 0.0, 1.0

        targets = np.linspace(0, 1, self.cdf_nodes)
        x_prob = np.interp(targets, F_fine, x_fine)
        x_tail = s * np.cos(np.linspace(math.pi, 0, TAIL_NODES))
        x_nodes = np.unique(np.concatenate([x_prob, x_tail, [-s, 0.0, s]]))
        F_nodes = np.interp(x_nodes, x_fine, F_fine)
        logger.debug(f"Built cdf table with {len(x_nodes)} nodes for q={self.q}")
        return x_nodes, F_nodes

    @functools.cached_property
    def _cdf_interp(self):
        x_nodes, F_nodes = self.cdf_table
        return PchipInterpolator(x_nodes, F_nodes, extrapolate=False)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == GAUSSIAN:
            return ndtr(x)
        if self.kind == TWO_POINT:
            return np.where(x < -1, 0.0, np.where(x < 1, 0.5, 1.0))
        s = self.support_halfwidth
        inner = np.clip(x, -s, s)
        F = np.clip(self._cdf_interp(inner), 0.0, 1.0)
        return np.where(x <= -s, 0.0, np.where(x >= s, 1.0, F))

    def ppf(self, u):
        """Inverse cdf, bracketed by the table and polished by bisection"""
        u = np.asarray(u, dtype=float)
        if self.kind == GAUSSIAN:
            return ndtri(u)
        if self.kind == TWO_POINT:
            return np.where(u <= 0.5, -1.0, 1.0)

        x_nodes, F_nodes = self.cdf_table
        idx = np.clip(np.searchsorted(F_nodes, u), 1, len(x_nodes) - 1)
        lo = x_nodes[idx - 1].copy()
        hi = x_nodes[idx].copy()
        while True:
            width = np.max(hi - lo, initial=0.0)
            if width <= PPF_TOLERANCE:
                break
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def sample(self, seed, count):
        """count i.i.d. draws; seed is anything numpy.random.default_rng accepts"""
        if self.kind == QNORMAL and len(self.cdf_table[0]) < 2048:
            raise ValueError("cdf table resolution must be at least 2048")
        rng = np.random.default_rng(seed)
        return self.ppf(rng.random(count))

    def moments(self, n_max):
        return moments(self.q, n_max)

    def quadrature(self, order, degree=None):
        return build_quadrature(self.q, order, degree)


@functools.lru_cache(maxsize=32)
def get_measure(q):
    return Measure(q)


def density(q, x):
    if not (-1 < q < 1):
        raise ValueError(f"density requires -1 < q < 1, got q={q}")
    return get_measure(q).density(x)


def cdf(measure, x):
    return measure.cdf(x)


def sample(measure, seed, count):
    return measure.sample(seed, count)


def moments(q, n_max):
    """m_0 .. m_{n_max}: expand x^n in the monic basis and keep the Q_0 coefficient"""
    if not (-1 <= q <= 1):
        raise ValueError(f"requires -1 <= q <= 1, got q={q}")
    beta = PolyFamily(q, MONIC, max(n_max, 1)).beta
    coef = np.zeros(n_max + 2)
    coef[0] = 1.0
    out = np.empty(n_max + 1)
    out[0] = 1.0
    for n in range(1, n_max + 1):
        # x Q_k = Q_{k+1} + beta_k Q_{k-1}
        nxt = np.zeros_like(coef)
        nxt[1:] += coef[:-1]
        nxt[:-1] += beta[1 : len(coef)] * coef[1:]
        coef = nxt
        out[n] = coef[0]
    return out


def build_quadrature(q, order, degree=None):
    """Gauss rule for the measure from the Jacobi matrix of the orthonormal recurrence

    Exact for polynomials of degree <= 2*order - 1. Pass degree to assert that
    a downstream integrand of that degree is covered.
    """
    if not (-1 <= q <= 1):
        raise ValueError(f"requires -1 <= q <= 1, got q={q}")
    if order < 2:
        raise ValueError(f"Quadrature order must be at least 2, got {order}")
    if degree is not None and degree > 2 * order - 1:
        raise ValueError(
            f"Quadrature order {order} is too small for degree {degree}"
        )
    if kind_of(q) == TWO_POINT:
        return QuadratureRule(np.array([-1.0, 1.0]), np.array([0.5, 0.5]), 2)

    b = PolyFamily(q, MONIC, order).b
    nodes, vectors = eigh_tridiagonal(np.zeros(order), b[1:order])
    weights = vectors[0, :] ** 2
    weights /= weights.sum()
    return QuadratureRule(nodes, weights, order)
