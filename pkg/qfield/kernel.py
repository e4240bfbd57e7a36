# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

"""Mehler-type kernel K(x, y) = sum_n rho^n Q_n(x) Q_n(y), orthonormal Q_n

K is the density of the one-step transition law with respect to the
stationary measure. It is evaluated either by the truncated series or by the
equivalent product

  prod_k (1 - rho^2 q^k) / ((1 + rho^2 q^2k - 2 rho q^k cos(tx + ty))
                           (1 + rho^2 q^2k - 2 rho q^k cos(tx - ty)))

with x = s cos(tx), y = s cos(ty), s = 2/sqrt(1-q).

Taking logs and expanding every factor in powers of rho q^k gives the cosine
form

  log K = sum_m rho^m (4 cos(m tx) cos(m ty) - rho^m) / (m (1 - q^m))

whose length depends on rho only. It replaces the product when q is close
enough to +-1 that the product would need more factors.
"""

import functools
import logging
import math

import numpy as np

from qfield.measure import PRODUCT_CAP, build_quadrature, get_measure
from qfield.params import GAUSSIAN, QNORMAL, TWO_POINT, kind_of
from qfield.qpoly import ORTHONORMAL, PolyFamily

logger = logging.getLogger(__name__)

SERIES = "series"
PRODUCT = "product"
CROSSCHECK = "crosscheck"
MODES = (SERIES, PRODUCT, CROSSCHECK)

TAIL_TOLERANCE = 1e-10
MAX_TRUNCATION = 4096
SUP_GRID_POINTS = 512
DIVERGENCE_LIMIT = 1e12
RESCALE_LIMIT = 1e100
CLAMP_SLACK = 1e-14
PRODUCT_EPS = 1e-16
CROSSCHECK_RTOL = 1e-8

COSINE_CAP = 2**16

FACTORS = "factors"
COSINE = "cosine"

# Rows times points per evaluation block
_CHUNK_CELLS = 2**20


class DivergenceError(RuntimeError):
    pass


def _check_two_point(x, y):
    for v in (x, y):
        if not np.all(np.abs(v) == 1):
            raise ValueError("The two-point kernel is only defined on {-1, +1}")


def adaptive_truncation(q, rho, tol=TAIL_TOLERANCE, cap=MAX_TRUNCATION):
    """Smallest N with |rho|^N M_N^2 / (1 - |rho|) < tol

    M_N is the running sup norm of the orthonormal Q_n on a grid over the
    support. Returns (N, sup_norms). The test runs in logs and the recurrence
    is rescaled, so sup norms beyond the float range come back as inf.
    """
    ar = abs(rho)
    kind = kind_of(q)
    if kind == TWO_POINT:
        return 1, np.ones(2)
    log_target = math.log(tol * (1 - ar))
    log_ar = math.log(ar)
    if kind == GAUSSIAN:
        n = int(math.ceil(log_target / log_ar))
        return min(max(n, 1), cap), None

    s = 2 / math.sqrt(1 - q)
    grid = s * np.cos(np.linspace(0, math.pi, SUP_GRID_POINTS))
    prev = np.zeros_like(grid)
    cur = np.ones_like(grid)
    # Q_n = exp(log_scale) * cur
    log_scale = 0.0
    beta, b = 0.0, 0.0
    log_sups = [0.0]
    log_running = 0.0
    for n in range(cap + 1):
        if n >= 1 and n * log_ar + 2 * log_running < log_target:
            logger.debug(f"Series truncation N={n} for q={q}, rho={rho}")
            return n, _sups(log_sups)
        beta_next = q * beta + 1
        b_next = math.sqrt(beta_next)
        prev, cur = cur, (grid * cur - b * prev) / b_next
        beta, b = beta_next, b_next
        peak = float(np.max(np.abs(cur)))
        if peak > RESCALE_LIMIT:
            prev, cur = prev / peak, cur / peak
            log_scale += math.log(peak)
            peak = 1.0
        if peak > 0:
            log_running = max(log_running, log_scale + math.log(peak))
        log_sups.append(log_running)
    logger.warning(
        f"Series truncation for q={q}, rho={rho} capped at {cap}; "
        f"log tail estimate {cap * log_ar + 2 * log_running - math.log(1 - ar):.3g}"
    )
    return cap, _sups(log_sups)


def _sups(log_sups):
    with np.errstate(over="ignore"):
        return np.exp(np.array(log_sups))


class TransitionKernel:
    def __init__(self, params, measure=None, truncation_degree=None, mode=PRODUCT):
        if mode not in MODES:
            raise ValueError(f"Unknown evaluation mode '{mode}'")
        self.params = params
        self.q = params.q
        self.rho = params.rho
        self.kind = params.kind
        self.measure = measure or get_measure(params.q)
        self.mode = mode

        sups = None
        if truncation_degree is None:
            truncation_degree, sups = adaptive_truncation(self.q, self.rho)
        self.truncation_degree = int(truncation_degree)
        self.sup_norms = sups

        if self.kind == QNORMAL:
            self.support_halfwidth = 2 / math.sqrt(1 - self.q)
            self.family = PolyFamily(self.q, ORTHONORMAL, self.truncation_degree + 1)
            self._init_product()
        elif self.kind == GAUSSIAN:
            self.support_halfwidth = math.inf
            self.family = PolyFamily(self.q, ORTHONORMAL, self.truncation_degree + 1)
        else:
            self.support_halfwidth = 1.0
            self.family = None

    def __repr__(self):
        return (
            f"TransitionKernel(q={self.q!r}, rho={self.rho!r}, "
            f"truncation_degree={self.truncation_degree}, mode={self.mode!r})"
        )

    def _init_product(self):
        aq = abs(self.q)
        ar = abs(self.rho)
        if aq == 0:
            factors = 1
        else:
            factors = math.log(PRODUCT_EPS * (1 - aq) / ar) / math.log(aq)
            factors = max(int(math.ceil(factors)), 1)

        # Tail of the cosine form, using |1 - q^m| >= 1 - |q|
        m = np.arange(1, COSINE_CAP + 1)
        with np.errstate(under="ignore"):
            tail = 5 * ar ** (m + 1) / ((m + 1) * (1 - aq) * (1 - ar))
        below = np.flatnonzero(tail < PRODUCT_EPS)
        terms = int(m[below[0]]) if len(below) else COSINE_CAP

        if factors <= min(terms, PRODUCT_CAP):
            self.product_form = FACTORS
            self.product_terms = factors
            k = np.arange(factors)
            self._t = self.rho * self.q**k
            self._log_num = float(np.sum(np.log1p(-self.rho * self._t)))
            self._t_pos = self._t >= 0
            # d_k = (1 - t^2)^2 - 4t(1 + t^2) u v + 4t^2 (u^2 + v^2)
            self._row_const = (1 - self._t**2) ** 2
            self._row_cross = -4 * self._t * (1 + self._t**2)
            self._row_square = 4 * self._t**2
        else:
            if len(below) == 0:
                logger.warning(
                    f"Cosine form of the kernel for rho={self.rho} capped at "
                    f"{COSINE_CAP} terms"
                )
            self.product_form = COSINE
            self.product_terms = terms
            m = np.arange(1, terms + 1)
            with np.errstate(under="ignore"):
                power = self.rho**m
            if self.q > 0:
                gap = -np.expm1(m * math.log(self.q))
            else:
                gap = 1 - self.q**m
            self._m = m.astype(float)
            self._c = power / (m * gap)
            self._log_num = float(-np.sum(self._c * power))
        self._chunk = max(64, _CHUNK_CELLS // self.product_terms)
        logger.debug(
            f"Kernel product for q={self.q}, rho={self.rho}: "
            f"{self.product_form} form with {self.product_terms} terms"
        )

    def _angle(self, x):
        c = np.asarray(x, dtype=float) / self.support_halfwidth
        if np.any(np.abs(c) > 1 + CLAMP_SLACK):
            raise ValueError(
                f"Point outside the support [-{self.support_halfwidth}, "
                f"{self.support_halfwidth}]"
            )
        return np.arccos(np.clip(c, -1, 1))

    def _log_denominator(self, phi):
        t = self._t[:, None]
        pos = self._t_pos[:, None]
        # Both forms are sums of nonnegative terms
        s2 = np.sin(0.5 * phi) ** 2
        c2 = np.cos(0.5 * phi) ** 2
        d = np.where(pos, (1 - t) ** 2 + 4 * t * s2, (1 + t) ** 2 - 4 * t * c2)
        return np.sum(np.log(d), axis=0)

    def _log_product(self, tx, ty):
        if self.product_form == COSINE:
            mx = np.cos(self._m[:, None] * tx)
            my = np.cos(self._m[:, None] * ty)
            return self._log_num + 4 * np.sum(self._c[:, None] * mx * my, axis=0)
        log_den = self._log_denominator(tx + ty) + self._log_denominator(tx - ty)
        return self._log_num - log_den

    def product(self, x, y):
        x, y = np.broadcast_arrays(
            np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        )
        if self.kind == GAUSSIAN:
            return mehler(self.rho, x, y)
        if self.kind == TWO_POINT:
            _check_two_point(x, y)
            return 1 + self.rho * x * y
        tx = self._angle(x).ravel()
        ty = self._angle(y).ravel()
        out = np.empty(tx.shape)
        # inf near the corners of the support when q is close to 1
        with np.errstate(over="ignore"):
            for start in range(0, len(tx), self._chunk):
                sl = slice(start, start + self._chunk)
                out[sl] = np.exp(self._log_product(tx[sl], ty[sl]))
        return out.reshape(x.shape)

    def row(self, x, y):
        """K(x, y) for a single x and a 1-D array y inside the support

        No support checks; this is the inner loop of the rejection sampler.
        """
        if self.kind != QNORMAL:
            return self.product(x, y)
        s = self.support_halfwidth
        if self.product_form == COSINE:
            tx = math.acos(min(1.0, max(-1.0, x / s)))
            ty = np.arccos(np.clip(y / s, -1, 1))
            a = self._c * np.cos(self._m * tx)
            return np.exp(self._log_num + 4 * (a @ np.cos(np.outer(self._m, ty))))
        u = x / s
        v = y / s
        alpha = self._row_const + self._row_square * (u * u)
        beta = self._row_cross * u
        d = alpha[:, None] + v * (beta[:, None] + self._row_square[:, None] * v)
        return np.exp(self._log_num - np.sum(np.log(d), axis=0))

    def series(self, x, y, n_max=None, full_output=False):
        """Truncated series; with full_output also an error estimate

        The estimate is the tail |rho|^(N+1) Mx My / (1 - |rho|), Mx the
        running max of |Q_n(x)|, plus the rounding accumulated over the terms.
        """
        n_max = self.truncation_degree if n_max is None else int(n_max)
        x, y = np.broadcast_arrays(
            np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        )
        rho = self.rho
        if self.kind == TWO_POINT:
            _check_two_point(x, y)
            value = 1 + rho * x * y
            return (value, np.zeros_like(value)) if full_output else value

        family = self.family
        if family is None or family.max_degree < n_max + 1:
            family = PolyFamily(self.q, ORTHONORMAL, n_max + 1)
        if self.kind == QNORMAL:
            self._angle(x)
            self._angle(y)

        b = family.b
        px, cx = np.zeros_like(x), np.ones_like(x)
        py, cy = np.zeros_like(y), np.ones_like(y)
        total = np.ones_like(x)
        abs_total = np.ones_like(x)
        mx = np.ones_like(x)
        my = np.ones_like(y)
        rn = 1.0
        for n in range(n_max + 1):
            px, cx = cx, (x * cx - b[n] * px) / b[n + 1]
            py, cy = cy, (y * cy - b[n] * py) / b[n + 1]
            mx = np.maximum(mx, np.abs(cx))
            my = np.maximum(my, np.abs(cy))
            rn *= rho
            if n + 1 > n_max:
                break
            term = rn * cx * cy
            total = total + term
            abs_total = abs_total + np.abs(term)
            if np.any(np.abs(total) > DIVERGENCE_LIMIT):
                raise DivergenceError(
                    f"Kernel series partial sums exceed {DIVERGENCE_LIMIT:g} "
                    f"at degree {n + 1} (q={self.q}, rho={rho})"
                )
        if not full_output:
            return total
        ar = abs(rho)
        tail = ar ** (n_max + 1) * mx * my / (1 - ar)
        err = tail + 64 * np.finfo(float).eps * abs_total
        return total, err

    def evaluate(self, x, y):
        if self.mode == SERIES:
            return self.series(x, y)
        p = self.product(x, y)
        if self.mode == CROSSCHECK and self.kind != GAUSSIAN:
            s, err = self.series(x, y, full_output=True)
            bad = np.abs(s - p) > CROSSCHECK_RTOL * np.abs(p) + 10 * err
            if np.any(bad):
                logger.warning(
                    f"Series and product disagree at {int(np.sum(bad))} points "
                    f"(max difference {float(np.max(np.abs(s - p))):.3g})"
                )
        return p

    __call__ = evaluate

    def density(self, x, y):
        """Transition density of y given x; a pmf on {-1, +1} for the two-point law"""
        x, y = np.broadcast_arrays(
            np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        )
        if self.kind == GAUSSIAN:
            v = 1 - self.rho**2
            return np.exp(-((y - self.rho * x) ** 2) / (2 * v)) / math.sqrt(
                2 * math.pi * v
            )
        if self.kind == TWO_POINT:
            return 0.5 * self.product(x, y)
        return self.evaluate(x, y) * self.measure.density(y)

    def sup_bound(self, x, y_points=1025):
        """Grid estimate of sup_y K(x, y) over the support"""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == TWO_POINT:
            return 1 + abs(self.rho) * np.ones_like(x)
        if self.kind == GAUSSIAN:
            raise ValueError("The Gaussian kernel is unbounded")
        s = self.support_halfwidth
        y = s * np.cos(np.linspace(math.pi, 0, y_points))
        out = np.empty(x.shape)
        for i, xi in enumerate(x):
            out[i] = np.max(self.product(xi, y))
        return out


@functools.lru_cache(maxsize=32)
def get_kernel(params, mode=PRODUCT):
    return TransitionKernel(params, mode=mode)


def mehler(rho, x, y):
    """Closed form of the kernel at q = 1"""
    v = 1 - rho * rho
    return np.exp(-rho * (rho * (x * x + y * y) - 2 * x * y) / (2 * v)) / math.sqrt(v)


def kernel_series(params, x, y, n_max=None, full_output=False):
    if params.kind == GAUSSIAN:
        raise ValueError("Series evaluation requires -1 <= q < 1")
    return get_kernel(params).series(x, y, n_max=n_max, full_output=full_output)


def kernel_product(params, x, y):
    return get_kernel(params).product(x, y)


def transition_density(kernel, x, y):
    return kernel.density(x, y)


def default_grid(kernel, points=17):
    if kernel.kind == TWO_POINT:
        return np.array([-1.0, 1.0])
    if kernel.kind == GAUSSIAN:
        return np.linspace(-3, 3, points)
    return 0.9 * kernel.support_halfwidth * np.linspace(-1, 1, points)


def check_eigenfunction(kernel, n, grid=None):
    """max_x |int Q_n(y) K(x, y) dmu(y) - rho^n Q_n(x)| with orthonormal Q_n"""
    grid = default_grid(kernel) if grid is None else np.asarray(grid, dtype=float)
    order = max(n + kernel.truncation_degree, 2)
    rule = build_quadrature(kernel.q, order, degree=n + kernel.truncation_degree)
    family = PolyFamily(kernel.q, ORTHONORMAL, max(n, 1))

    qn_nodes = family.evaluate(n, rule.nodes)
    k = kernel.evaluate(grid[:, None], rule.nodes[None, :])
    lhs = rule.integrate(k * qn_nodes)
    rhs = kernel.rho**n * family.evaluate(n, grid)
    residual = float(np.max(np.abs(lhs - rhs)))
    logger.debug(f"Eigenfunction residual for n={n}: {residual:.3g}")
    return residual


def check_chapman_kolmogorov(params, grid=None):
    """max_{x,y} |int K_rho(x, z) K_rho(z, y) dmu(z) - K_{rho^2}(x, y)|

    Divided by max(1, max K_{rho^2}) over the grid, since K reaches 1e9 near
    the edges when q is close to 1.
    """
    kernel = get_kernel(params)
    squared = get_kernel(params.with_rho(params.rho**2))
    grid = default_grid(kernel) if grid is None else np.asarray(grid, dtype=float)
    order = max(2 * kernel.truncation_degree, 2)
    rule = build_quadrature(params.q, order)

    left = kernel.evaluate(grid[:, None], rule.nodes[None, :])
    composed = (left * rule.weights) @ left.T
    direct = squared.evaluate(grid[:, None], grid[None, :])
    scale = max(1.0, float(np.max(np.abs(direct))))
    residual = float(np.max(np.abs(composed - direct))) / scale
    logger.debug(f"Chapman-Kolmogorov residual: {residual:.3g}")
    return residual
