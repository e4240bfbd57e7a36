# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

import logging
import math

import numpy as np
import pytest
from scipy.stats import kstest, norm

from test_common import integrate, q_grid

from qfield.measure import (
    Measure,
    build_quadrature,
    cdf,
    density,
    get_measure,
    moments,
    product_length,
    sample,
    series_length,
)
from qfield.params import GAUSSIAN, QNORMAL, TWO_POINT
from qfield.qpoly import MONIC, ORTHONORMAL, PolyFamily, monic_norm_sq


def test_kinds():
    assert get_measure(-1.0).kind == TWO_POINT
    assert get_measure(0.0).kind == QNORMAL
    assert get_measure(1.0).kind == GAUSSIAN
    assert get_measure(1 - 1e-7).kind == GAUSSIAN
    assert get_measure(0.5).support_halfwidth == pytest.approx(2 * math.sqrt(2))
    assert get_measure(1.0).support_halfwidth == math.inf
    with pytest.raises(ValueError):
        Measure(1.5)


def test_semicircle_density():
    assert density(0, 0) == pytest.approx(1 / math.pi, abs=1e-12)
    assert density(0, 2) == 0
    assert density(0, -2) == 0
    assert density(0, 3) == 0
    x = np.linspace(-1.9, 1.9, 21)
    np.testing.assert_allclose(
        density(0, x), np.sqrt(4 - x * x) / (2 * math.pi), rtol=1e-12
    )


def test_density_errors():
    with pytest.raises(ValueError):
        density(1, 0)
    with pytest.raises(ValueError):
        density(-1, 0)
    with pytest.raises(ValueError):
        get_measure(-1.0).density(1.0)


@pytest.mark.parametrize("q", q_grid)
def test_analytic_constant(q):
    # The analytic constant needs no numerical correction
    assert get_measure(q).normalization == pytest.approx(1, abs=1e-6)


@pytest.mark.parametrize("q", q_grid)
def test_standardization(q):
    m = get_measure(q)
    assert integrate(m, lambda x: 1) == pytest.approx(1, abs=1e-8)
    assert integrate(m, lambda x: x) == pytest.approx(0, abs=1e-8)
    assert integrate(m, lambda x: x * x) == pytest.approx(1, abs=1e-8)


@pytest.mark.parametrize("q", q_grid)
def test_density_orthogonality(q):
    # Against the density itself rather than the Jacobi-matrix rule
    m = get_measure(q)
    family = PolyFamily(q, MONIC, 8)
    for i, j in [(3, 5), (2, 6), (1, 2)]:
        value = integrate(
            m, lambda x: float(family.evaluate(i, x) * family.evaluate(j, x))
        )
        assert abs(value) < 1e-8
    value = integrate(m, lambda x: float(family.evaluate(4, x) ** 2))
    assert value == pytest.approx(monic_norm_sq(q, 4), rel=1e-8)


def test_density_nonnegative():
    for q in q_grid:
        m = get_measure(q)
        s = m.support_halfwidth
        x = np.linspace(-1.2 * s, 1.2 * s, 1001)
        f = m.density(x)
        assert np.all(f >= 0)
        assert np.all(f[np.abs(x) >= s] == 0)


@pytest.mark.parametrize("q", q_grid)
def test_orthonormality(q):
    rule = build_quadrature(q, 20)
    values = PolyFamily(q, ORTHONORMAL).evaluate_all(12, rule.nodes)
    gram = (values * rule.weights) @ values.T
    np.testing.assert_allclose(gram, np.eye(13), atol=1e-8)


@pytest.mark.parametrize("q", q_grid)
def test_monic_norms(q):
    rule = build_quadrature(q, 20)
    values = PolyFamily(q, MONIC).evaluate_all(12, rule.nodes)
    for n in range(13):
        assert rule.integrate(values[n] ** 2) == pytest.approx(
            monic_norm_sq(q, n), rel=1e-8
        )


def test_quadrature_examples():
    rule = build_quadrature(0, 2)
    np.testing.assert_allclose(rule.nodes, [-1, 1], atol=1e-14)
    np.testing.assert_allclose(rule.weights, [0.5, 0.5], atol=1e-14)
    assert rule.integrate(np.ones(2)) == pytest.approx(1)
    assert rule.integrate(rule.nodes**2) == pytest.approx(1)
    assert rule.integrate(rule.nodes**3) == pytest.approx(0, abs=1e-14)

    for q in q_grid + [1.0]:
        for order in (2, 5, 40):
            weights = build_quadrature(q, order).weights
            assert weights.sum() == pytest.approx(1, abs=1e-12)

    rule = build_quadrature(0.5, 40)
    family = PolyFamily(0.5)
    product = family.evaluate(3, rule.nodes) * family.evaluate(5, rule.nodes)
    assert abs(rule.integrate(product)) < 1e-10


def test_quadrature_endpoints():
    rule = build_quadrature(-1, 2)
    np.testing.assert_array_equal(rule.nodes, [-1, 1])
    np.testing.assert_array_equal(rule.weights, [0.5, 0.5])

    rule = build_quadrature(1, 10)
    np.testing.assert_allclose(
        [rule.integrate(rule.nodes**k) for k in range(7)],
        [1, 0, 1, 0, 3, 0, 15],
        atol=1e-10,
    )


def test_quadrature_errors():
    with pytest.raises(ValueError):
        build_quadrature(0.5, 1)
    with pytest.raises(ValueError):
        build_quadrature(0.5, 4, degree=8)
    build_quadrature(0.5, 4, degree=7)
    with pytest.raises(ValueError):
        build_quadrature(2, 4)


def test_moments():
    np.testing.assert_array_equal(moments(1, 6), [1, 0, 1, 0, 3, 0, 15])
    np.testing.assert_array_equal(moments(-1, 6), [1, 0, 1, 0, 1, 0, 1])
    np.testing.assert_allclose(moments(0, 8), [1, 0, 1, 0, 2, 0, 5, 0, 14], atol=1e-8)
    for q in q_grid:
        assert np.all(moments(q, 15)[1::2] == 0)
    np.testing.assert_array_equal(get_measure(0.5).moments(4), moments(0.5, 4))


@pytest.mark.parametrize("q", q_grid + [1.0])
def test_moments_match_quadrature(q):
    expected = moments(q, 16)
    rule = build_quadrature(q, 10)
    found = np.array([rule.integrate(rule.nodes**n) for n in range(17)])
    np.testing.assert_allclose(found, expected, rtol=1e-8, atol=1e-10 * expected.max())


def test_gaussian_limit():
    gaussian = moments(1, 8)
    near = moments(0.999, 8)
    nearer = moments(0.99, 8)
    for n in range(0, 9, 2):
        assert nearer[n] <= near[n] <= gaussian[n]
    assert nearer[8] < near[8] < gaussian[8]


def test_cdf():
    assert cdf(get_measure(0.3), 0.0) == pytest.approx(0.5, abs=1e-12)
    m = get_measure(0.0)
    assert cdf(m, 2.0) == 1
    assert cdf(m, -2.0) == 0
    assert cdf(m, 5.0) == 1
    assert cdf(m, -5.0) == 0
    semicircle = 0.5 + math.sqrt(3) / (4 * math.pi) + 1 / 6
    assert cdf(m, 1.0) == pytest.approx(semicircle, abs=1e-6)


@pytest.mark.parametrize("q", q_grid)
def test_cdf_shape(q):
    m = get_measure(q)
    s = m.support_halfwidth
    x = np.linspace(-s, s, 2001)
    F = m.cdf(x)
    assert F[0] == 0
    assert F[-1] == 1
    assert np.all(np.diff(F) >= 0)
    np.testing.assert_allclose(m.cdf(-x), 1 - F, atol=1e-7)
    assert len(m.cdf_table[0]) >= 2048


def test_cdf_endpoints():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    np.testing.assert_array_equal(get_measure(-1.0).cdf(x), [0, 0.5, 0.5, 1, 1])
    np.testing.assert_allclose(get_measure(1.0).cdf(x), norm.cdf(x), rtol=1e-14)
    np.testing.assert_allclose(get_measure(1.0).density(x), norm.pdf(x), rtol=1e-14)
    with pytest.raises(ValueError):
        get_measure(1.0).cdf_table


@pytest.mark.parametrize("q", [-0.5, 0.0, 0.5])
def test_ppf(q):
    m = get_measure(q)
    x = 0.9 * m.support_halfwidth * np.linspace(-1, 1, 101)
    np.testing.assert_allclose(m.ppf(m.cdf(x)), x, atol=1e-9)
    np.testing.assert_allclose(get_measure(1.0).ppf([0.5, norm.cdf(1.0)]), [0, 1])


def test_sample_two_point():
    values = sample(get_measure(-1.0), 1, 10**6)
    assert set(np.unique(values)) == {-1.0, 1.0}
    assert np.mean(values > 0) == pytest.approx(0.5, abs=0.002)


def test_sample_support():
    m = get_measure(0.5)
    values = sample(m, 2, 10**6)
    assert np.all(np.abs(values) <= m.support_halfwidth)
    assert np.mean(values) == pytest.approx(0, abs=0.005)
    assert np.var(values) == pytest.approx(1, abs=0.01)


def test_sample_fourth_moment():
    values = sample(get_measure(0.0), 3, 10**6)
    assert np.mean(values**4) == pytest.approx(2, abs=0.015)


def test_sample_ks():
    m = get_measure(0.5)
    n = 10**5
    values = m.sample(4, n)
    assert kstest(values, m.cdf).statistic < 1.63 / math.sqrt(n)


def test_sample_deterministic():
    m = get_measure(0.3)
    np.testing.assert_array_equal(m.sample(7, 1000), m.sample(7, 1000))
    assert not np.array_equal(m.sample(7, 1000), m.sample(8, 1000))


def test_product_length():
    assert product_length(0) == (0, False)
    assert product_length(0.5) == (54, False)
    assert product_length(-0.5) == (54, False)
    assert product_length(0.9999) == (2048, True)


def test_series_length():
    assert series_length(0) == 1
    n = series_length(0.9999)
    assert 0.9999 ** (n * (n + 1) / 2) < 1e-16
    assert 0.9999 ** ((n - 1) * n / 2) >= 1e-16


@pytest.mark.parametrize("q", [-0.9, 0.5, 0.9])
def test_sine_series_matches_product(q):
    product = Measure(q)
    series = Measure(q, product_cap=4)
    assert product.series_terms == 0
    assert series.series_terms > 0
    x = np.linspace(-1, 1, 41) * product.support_halfwidth
    np.testing.assert_allclose(
        series.density(x), product.density(x), rtol=1e-9, atol=1e-13
    )


@pytest.mark.parametrize("q", [0.999, 0.9999, -0.999])
def test_near_one(q, caplog):
    with caplog.at_level(logging.WARNING):
        m = Measure(q)
    assert m.series_terms > 0
    assert "renormalizing" not in caplog.text
    assert m.normalization == 1
    x, F = m.cdf_table
    assert F[0] == 0
    assert F[-1] == 1
    if q > 0:
        assert integrate(m, lambda x: 1) == pytest.approx(1, abs=1e-6)
        assert integrate(m, lambda x: x * x) == pytest.approx(1, abs=1e-6)
        # Already close to the standard normal law
        x = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(m.density(x), norm.pdf(x), rtol=1e-2)
