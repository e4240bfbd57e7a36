# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e

from test_common import q_grid

from qfield.qpoly import (
    MONIC,
    ORTHONORMAL,
    DegreeError,
    PolyFamily,
    carleman_lower_bound,
    carleman_partial_sums,
    eval_all,
    eval_poly,
    is_moment_determinate,
    monic_norm_sq,
    q_integer,
)


def test_q_integer():
    assert q_integer(3, 1) == 3
    assert q_integer(3, 0) == 1
    assert q_integer(4, 0.5) == pytest.approx(1.875, abs=1e-15)
    assert q_integer(0, 0.5) == 0


@pytest.mark.parametrize("q", [-1, -0.9, -0.5, 0, 0.3, 0.5, 0.9, 0.999, 1 - 1e-9, 1])
def test_q_integer_literal_sum(q):
    for n in range(21):
        literal = math.fsum(q**k for k in range(n))
        assert q_integer(n, q) == pytest.approx(literal, rel=1e-13, abs=1e-14)


def test_eval_poly_low_degree():
    x = np.linspace(-3, 3, 13)
    for q in [-1, -0.5, 0, 0.5, 1]:
        family = PolyFamily(q)
        np.testing.assert_allclose(eval_poly(family, 2, x), x * x - 1, atol=1e-14)
        np.testing.assert_array_equal(eval_poly(family, 0, x), np.ones_like(x))
        np.testing.assert_array_equal(eval_poly(family, 1, x), x)


def test_eval_poly_examples():
    assert eval_poly(PolyFamily(1), 3, 0.0) == 0
    theta = math.pi / 3
    value = eval_poly(PolyFamily(0), 4, 2 * math.cos(theta))
    assert value == pytest.approx(-1, abs=1e-12)


def test_chebyshev_u():
    # At q = 0 the monic polynomials are Q_n(2 cos t) = sin((n+1) t) / sin(t)
    family = PolyFamily(0)
    theta = np.linspace(0.05, math.pi - 0.05, 41)
    values = family.evaluate_all(15, 2 * np.cos(theta))
    for n in range(16):
        oracle = np.sin((n + 1) * theta) / np.sin(theta)
        np.testing.assert_allclose(values[n], oracle, atol=1e-10)


def test_eval_all():
    np.testing.assert_array_equal(eval_all(PolyFamily(0.3), 0, 7.0), [1.0])
    for q in [-0.5, 0, 0.5, 1]:
        out = eval_all(PolyFamily(q, ORTHONORMAL), 1, 0.7)
        np.testing.assert_allclose(out, [1, 0.7])
    np.testing.assert_allclose(eval_all(PolyFamily(0.5), 3, 1.0), [1, 1, 0, -1.5])

    family = PolyFamily(0.4)
    x = np.linspace(-2, 2, 7)
    everything = eval_all(family, 10, x)
    assert everything.shape == (11, 7)
    for n in range(11):
        np.testing.assert_array_equal(everything[n], eval_poly(family, n, x))


def test_degree_overflow():
    family = PolyFamily(0.5, max_degree=10)
    family.evaluate(10, 0.0)
    with pytest.raises(DegreeError):
        family.evaluate(11, 0.0)
    with pytest.raises(DegreeError):
        family.evaluate_all(11, 0.0)
    with pytest.raises(DegreeError):
        family.evaluate(-1, 0.0)
    # No orthonormal polynomials of degree 2 and up on a two-point support
    with pytest.raises(DegreeError):
        PolyFamily(-1, ORTHONORMAL).evaluate(2, 1.0)


def test_bad_family():
    with pytest.raises(ValueError):
        PolyFamily(1.5)
    with pytest.raises(ValueError):
        PolyFamily(0.5, normalization="Chebyshev")


@pytest.mark.parametrize("q", q_grid + [1])
def test_recurrence_consistency(q):
    family = PolyFamily(q)
    s = 2 / math.sqrt(1 - q) if q < 1 else 4
    x = np.random.default_rng(1234).uniform(-s, s, 50)
    values = family.evaluate_all(31, x)
    for n in range(1, 31):
        lhs = x * values[n]
        rhs = values[n + 1] + family.beta[n] * values[n - 1]
        scale = (
            np.abs(lhs)
            + np.abs(values[n + 1])
            + np.abs(family.beta[n] * values[n - 1])
        )
        assert np.all(np.abs(lhs - rhs) <= 1e-10 * (scale + 1))


@pytest.mark.parametrize("q", q_grid + [-1, 1])
def test_beta_recursion(q):
    family = PolyFamily(q)
    for n in range(61):
        assert abs(family.beta[n + 1] - (q * family.beta[n] + 1)) < 1e-14
        assert family.beta[n] == pytest.approx(q_integer(n, q), rel=1e-13, abs=1e-14)
    assert family.b[0] == 0
    assert family.b[1] == 1
    if q > -1:
        assert np.all(family.b[1:] > 0)


@pytest.mark.parametrize("q", q_grid + [1])
def test_monic_orthonormal(q):
    monic = PolyFamily(q, MONIC)
    ortho = PolyFamily(q, ORTHONORMAL)
    x = np.linspace(-1.5, 1.5, 11)
    m = monic.evaluate_all(20, x)
    o = ortho.evaluate_all(20, x)
    for n in range(21):
        scale = max(1.0, float(np.max(np.abs(m[n]))))
        np.testing.assert_allclose(
            m[n], o[n] * math.sqrt(monic_norm_sq(q, n)), rtol=1e-10, atol=1e-12 * scale
        )
    assert ortho.norm_sq(7) == 1
    assert monic.norm_sq(7) == monic_norm_sq(q, 7)


def test_hermite_limit():
    family = PolyFamily(1)
    x = np.linspace(-3, 3, 25)
    values = family.evaluate_all(15, x)
    for n in range(16):
        coef = np.zeros(n + 1)
        coef[n] = 1
        oracle = hermite_e.hermeval(x, coef)
        scale = max(1.0, float(np.max(np.abs(oracle))))
        np.testing.assert_allclose(values[n], oracle, rtol=1e-12, atol=1e-12 * scale)


def test_two_point_degeneracy():
    family = PolyFamily(-1)
    for n in range(2, 11):
        assert family.evaluate(n, 1.0) == 0
        assert family.evaluate(n, -1.0) == 0


def test_monic_norm_sq():
    assert monic_norm_sq(1, 4) == 24
    assert monic_norm_sq(0, 5) == 1
    assert monic_norm_sq(0.5, 3) == pytest.approx(2.625, abs=1e-15)
    assert monic_norm_sq(0.5, 0) == 1


def test_carleman():
    assert carleman_partial_sums(0, 10)[-1] == pytest.approx(10)
    assert carleman_partial_sums(1, 4)[-1] == pytest.approx(
        1 + 1 / math.sqrt(2) + 1 / math.sqrt(3) + 0.5
    )
    np.testing.assert_allclose(carleman_partial_sums(0.5, 1), [1])
    with pytest.raises(ValueError):
        carleman_partial_sums(-1, 10)


@pytest.mark.parametrize("q", [-0.99, -0.9, -0.5, 0, 0.5, 0.9, 0.99, 1])
def test_carleman_bound(q):
    sums = carleman_partial_sums(q, 500)
    for N in (1, 10, 100, 500):
        assert sums[N - 1] >= carleman_lower_bound(q, N) * (1 - 1e-12)
    # Partial sums grow without bound
    assert sums[-1] > 2 * sums[9]


@pytest.mark.parametrize("q", [-1, -0.9, 0, 0.5, 0.99, 1])
def test_moment_determinate(q):
    assert is_moment_determinate(q)
