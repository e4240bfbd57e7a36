# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

"""Continuous q-Hermite polynomials in the standardized (variance one) scaling

Monic:        x Q_n = Q_{n+1} + beta_n Q_{n-1}
Orthonormal:  x Q_n = b_{n+1} Q_{n+1} + b_n Q_{n-1},  b_n = sqrt(beta_n)

with beta_n = 1 + q + ... + q^(n-1), Q_{-1} = 0 and Q_0 = 1.
"""

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)

MONIC = "Monic"
ORTHONORMAL = "Orthonormal"

DEFAULT_MAX_DEGREE = 64


class DegreeError(ValueError):
    pass


def _check_q(q):
    if not (-1 <= q <= 1):
        raise ValueError(f"requires -1 <= q <= 1, got q={q}")


def q_integer(n, q):
    """[n]_q = 1 + q + ... + q^(n-1)"""
    if n < 0:
        raise ValueError("n must be non-negative")
    if q == 1:
        return float(n)
    if abs(1 - q) < 1e-8:
        return math.fsum(q**k for k in range(n))
    if q > 0:
        # 1 - q^n without cancellation
        return -math.expm1(n * math.log1p(q - 1)) / (1 - q)
    return (1 - q**n) / (1 - q)


def monic_norm_sq(q, n):
    """E Q_n(X)^2 = [1]_q [2]_q ... [n]_q"""
    if n < 0:
        raise ValueError("n must be non-negative")
    return math.prod(q_integer(k, q) for k in range(1, n + 1))


class PolyFamily:
    def __init__(self, q, normalization=MONIC, max_degree=DEFAULT_MAX_DEGREE):
        _check_q(q)
        if normalization not in (MONIC, ORTHONORMAL):
            raise ValueError(f"Unknown normalization '{normalization}'")
        self.q = float(q)
        self.normalization = normalization
        self.max_degree = int(max_degree)

        # beta_{n+1} = q beta_n + 1 is the recursion used everywhere
        beta = np.zeros(self.max_degree + 2)
        for n in range(self.max_degree + 1):
            beta[n + 1] = self.q * beta[n] + 1
        self.beta = beta
        self.b = np.sqrt(np.maximum(beta, 0.0))

    def __repr__(self):
        return (
            f"PolyFamily(q={self.q!r}, normalization={self.normalization!r}, "
            f"max_degree={self.max_degree})"
        )

    def _check_degree(self, n):
        if n < 0:
            raise DegreeError(f"Negative degree {n}")
        if n > self.max_degree:
            raise DegreeError(
                f"Degree {n} exceeds max_degree {self.max_degree} of {self!r}"
            )
        if self.normalization == ORTHONORMAL and n >= 2 and self.b[2] == 0:
            raise DegreeError(
                "Orthonormal polynomials of degree > 1 do not exist at q = -1"
            )

    def _run(self, n_max, x, keep_all):
        self._check_degree(n_max)
        x = np.asarray(x, dtype=float)
        out = np.empty((n_max + 1,) + x.shape) if keep_all else None

        prev = np.zeros_like(x)
        cur = np.ones_like(x)
        if keep_all:
            out[0] = cur
        monic = self.normalization == MONIC
        for n in range(n_max):
            if monic:
                nxt = x * cur - self.beta[n] * prev
            else:
                nxt = (x * cur - self.b[n] * prev) / self.b[n + 1]
            prev, cur = cur, nxt
            if keep_all:
                out[n + 1] = cur
        return out if keep_all else cur

    def evaluate(self, n, x):
        return self._run(n, x, keep_all=False)

    def evaluate_all(self, n_max, x):
        """Array of shape (n_max + 1,) + shape(x) holding Q_0(x) .. Q_{n_max}(x)"""
        return self._run(n_max, x, keep_all=True)

    def norm_sq(self, n):
        if self.normalization == ORTHONORMAL:
            return 1.0
        return monic_norm_sq(self.q, n)


def eval_poly(family, n, x):
    return family.evaluate(n, x)


def eval_all(family, n_max, x):
    return family.evaluate_all(n_max, x)


def carleman_partial_sums(q, N):
    """S_1 .. S_N with S_N = sum_{n<=N} 1/b_n"""
    if not (-1 < q <= 1):
        raise ValueError(f"requires -1 < q <= 1, got q={q}")
    b = np.sqrt([q_integer(n, q) for n in range(1, N + 1)])
    return np.cumsum(1 / b)


def carleman_lower_bound(q, N):
    """Divergent lower bound satisfied by S_N"""
    if q == 1:
        return 2 * (math.sqrt(N + 1) - 1)
    # beta_n <= max(1, 1/(1-q)) for -1 < q < 1
    return N * math.sqrt(min(1.0, 1 - q))


def is_moment_determinate(q, N=1000):
    """Carleman witness: the partial sums grow at least like the bound"""
    _check_q(q)
    if q == -1:
        # Two-point measure, trivially determinate
        return True
    sums = carleman_partial_sums(q, N)
    ok = bool(sums[-1] >= carleman_lower_bound(q, N) * (1 - 1e-12))
    logger.debug(f"Carleman partial sum S_{N}={sums[-1]} for q={q}")
    return ok
