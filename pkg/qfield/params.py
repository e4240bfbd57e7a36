# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

"""Parameter algebra for the (rho, R) family

All coefficients of the two-sided conditional moments

  E(X_k | rest) = a (X_{k-1} + X_{k+1})
  E(X_k^2 | rest) = A (X_{k-1}^2 + X_{k+1}^2) + B X_{k-1} X_{k+1} + C

are derived here once and carried around in a ModelParams. Nothing downstream
recomputes q.
"""

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)

TOLERANCE = 1e-12

TWO_POINT = "TwoPoint"
QNORMAL = "QNormal"
GAUSSIAN = "Gaussian"

BOUNDED = "Bounded"
BOUNDED_BELOW = "BoundedBelow"
BOUNDED_ABOVE = "BoundedAbove"
# Never returned: there is no converse to the boundedness criterion
UNBOUNDED = "Unbounded"
INCONCLUSIVE = "Inconclusive"


# Closer than this to +-1 the exact endpoint laws are used
ENDPOINT_SLACK = 1e-6


def kind_of(q):
    if q <= -1 + ENDPOINT_SLACK:
        return TWO_POINT
    if q >= 1 - ENDPOINT_SLACK:
        return GAUSSIAN
    return QNORMAL


class ParameterError(ValueError):
    """Raised when a parameter violates one of the model assumptions

    The message is the violated assumption, e.g. "requires rho != 0".
    """

    def __init__(self, msg, value=None):
        super().__init__(msg)
        self.msg = msg
        self.value = value


def _check_rho(rho):
    if not math.isfinite(rho):
        raise ParameterError("requires a finite rho", rho)
    if rho == 0:
        raise ParameterError("requires rho != 0", rho)
    if abs(rho) >= 1:
        raise ParameterError("requires |rho| < 1", rho)


class ModelParams:
    """Correlation rho, scale parameter R and every derived coefficient"""

    def __init__(self, rho: float, R: float, q: float = None):
        rho = float(rho)
        R = float(R)
        _check_rho(rho)
        if not (0 <= R <= 2):
            raise ParameterError("requires 0 <= R <= 2", R)

        r2 = rho * rho
        r4 = r2 * r2
        if q is None:
            q = (r4 + R - 1) / (1 + r4 * (R - 1))
        q = float(q)
        if not (-1 - TOLERANCE <= q <= 1 + TOLERANCE):
            raise ParameterError("requires -1 <= q <= 1", q)

        self.rho = rho
        self.R = R
        self.q = min(1.0, max(-1.0, q))
        self.a = rho / (1 + r2)
        # Closed form: B from the R identity, then A, then C
        self.B = R * r2 / (1 + r2) ** 2
        self.A = (1 - self.B) * r2 / (1 + r4)
        self.C = 1 - 2 * self.A - self.B * r2
        self.D = 0.0
        self.gamma = self.D / (1 - (1 + r2) * self.A)
        if kind_of(self.q) != GAUSSIAN:
            self.support_halfwidth = 2 / math.sqrt(1 - self.q)
        else:
            self.support_halfwidth = math.inf

    @property
    def kind(self):
        return kind_of(self.q)

    def regression(self, x, y):
        """L(x, y) = a (x + y)"""
        return self.a * (x + y)

    def quadratic_form(self, x, y):
        """Q(x, y) = A (x^2 + y^2) + B x y + C"""
        return self.A * (x * x + y * y) + self.B * x * y + self.C

    def residuals(self):
        """Residuals of the defining identities; all vanish to rounding"""
        rho = self.rho
        r2 = rho * rho
        return {
            "quadratic_identity": self.A * (r2 + 1 / r2) + self.B - 1,
            "constant_term": self.C - (1 - 2 * self.A - self.B * r2),
            "scale": self.B * (rho + 1 / rho) ** 2 - self.R,
            "regression": self.a * (1 + r2) - rho,
        }

    def to_dict(self):
        return {
            "rho": self.rho,
            "R": self.R,
            "q": self.q,
            "a": self.a,
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "D": self.D,
            "support_halfwidth": self.support_halfwidth,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["rho"], d["R"], q=d.get("q"))

    def with_rho(self, rho):
        """Same q, different correlation"""
        return derive_params_from_q(rho, self.q)

    def __repr__(self):
        return f"ModelParams(rho={self.rho!r}, R={self.R!r}, q={self.q!r})"

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.rho, self.R, self.q) == (other.rho, other.R, other.q)

    def __hash__(self):
        return hash((self.rho, self.R, self.q))


def derive_params(rho, R):
    params = ModelParams(rho, R)
    logger.debug(f"Derived {params!r}")
    return params


def derive_params_from_q(rho, q):
    """Inverse of the q(rho, R) map: R = (1+q)(1-rho^4)/(1-q rho^4)

    q is stored exactly as given, so q = -1 and q = 1 stay exact.
    """
    _check_rho(rho)
    q = float(q)
    if not (-1 <= q <= 1):
        raise ParameterError("requires -1 <= q <= 1", q)
    r4 = rho**4
    R = (1 + q) * (1 - r4) / (1 - q * r4)
    R = min(2.0, max(0.0, R))
    return ModelParams(rho, R, q=q)


class CorrelationSequence:
    def __init__(self, rho, r2, values, root):
        self.rho = rho
        self.r2 = r2
        self.values = values
        self.root = root

    def recurrence_residuals(self):
        """(1+r2) r_k - rho (r_{k-1} + r_{k+1}) for k = 1..K-1"""
        r = self.values
        k = np.arange(1, len(r) - 1)
        return (1 + self.r2) * r[k] - self.rho * (r[k - 1] + r[k + 1])


def solve_correlations(rho, r2, K):
    """Correlations r_0..r_K forced by the linear regression condition

    r_k = r2 c^(k-2) for k >= 2, with c the root of
    rho c^2 - (1+r2) c + rho = 0 inside (-1, 1).
    """
    rho = float(rho)
    r2 = float(r2)
    if rho == 0:
        raise ParameterError("requires rho != 0", rho)
    if abs(r2) > 1:
        raise ParameterError("requires |r_2| <= 1", r2)
    if not (r2 + 1 - 2 * abs(rho) > 0):
        raise ParameterError("requires r_2+1-2|rho|>0", (rho, r2))
    if K < 0:
        raise ValueError("K must be non-negative")

    s = 1 + r2
    # Roots multiply to 1; this is the one of smaller modulus, written
    # without cancellation
    c = 2 * rho / (s + math.sqrt(s * s - 4 * rho * rho))

    values = np.empty(K + 1)
    values[0] = 1.0
    if K >= 1:
        values[1] = rho
    if K >= 2:
        values[2:] = r2 * c ** np.arange(K - 1)
    return CorrelationSequence(rho, r2, values, c)


def classify_boundedness(A, B, D, rho):
    """Boundedness of X_0 implied by the quadratic form coefficients"""
    _check_rho(rho)
    r2 = rho * rho
    if not A < 1 / (1 + r2):
        raise ParameterError("requires A < 1/(1+rho^2)", A)

    lhs = A * (r2 + 1 / r2) + B
    if lhs < 1 - TOLERANCE:
        return BOUNDED
    if abs(lhs - 1) <= TOLERANCE:
        if D > 0:
            return BOUNDED_BELOW
        if D < 0:
            return BOUNDED_ABOVE
        return INCONCLUSIVE
    # lhs > 1 is outside what the criterion decides
    return INCONCLUSIVE


def single_step_moments(rho, A, B, C, D=0.0):
    """Coefficients of E(X_1^2 | ..., X_0) = c2 X_0^2 + c1 X_0 + c0

    Obtained from (1 - A(1+rho^2)) E(X_1^2|...,X_0)
      = (A(1-rho^2) + B rho^2) X_0^2 + C + D(1+rho^2) X_0.
    When A(rho^2+1/rho^2)+B = 1 and D = 0 this is (rho^2, 0, 1-rho^2).
    """
    r2 = rho * rho
    den = 1 - A * (1 + r2)
    if den <= 0:
        raise ParameterError("requires A < 1/(1+rho^2)", A)
    return (
        (A * (1 - r2) + B * r2) / den,
        D * (1 + r2) / den,
        C / den,
    )
