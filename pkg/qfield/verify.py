# Copyright qfield contributors
# Licensed under the 2-Clause BSD License, see LICENSE for details.
# SPDX-License-Identifier: BSD-2-Clause

"""Monte Carlo verification of the conditional moment identities

A conditional expectation E(Y | U, V) = m(U, V) is checked through the
orthogonality relations E[(Y - m(U, V)) g(U, V)] = 0 for a dictionary of test
functions g. Each relation becomes a residual with a Monte Carlo standard
error and a verdict.

Runs are duck typed. Anything with .series (replications x time), .length,
.lag_one, .poly_q, .conditional_model() and .correlation_target(k) can be
verified; ChainRun and the counterexample runs provide these.
"""

import itertools
import logging
import math

import numpy as np
from scipy.stats import binom, kstest

from qfield.chain import TWO_STATE, ChainRun, seed_entropy
from qfield.measure import get_measure
from qfield.params import TWO_POINT, derive_params_from_q, single_step_moments
from qfield.qpoly import MONIC, PolyFamily

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

Z_MULTIPLIER = 4.0
BIAS_FLOOR = 1e-3
MIN_CONDITIONAL_SAMPLES = 10**5
KS_CRITICAL = 1.63
KS_BURN_IN = 5000
REVERSIBILITY_BINS = 8
REVERSIBILITY_BATCHES = 64
REVERSIBILITY_ALPHA = 1e-3

PASS = "pass"
FAIL = "fail"


class InsufficientLengthError(ValueError):
    pass


class Residual:
    def __init__(self, name, value, stderr, **extra):
        self.name = name
        self.value = float(value)
        self.stderr = float(stderr)
        self.threshold = Z_MULTIPLIER * self.stderr + BIAS_FLOOR
        self.extra = extra

    @property
    def verdict(self):
        return PASS if abs(self.value) <= self.threshold else FAIL

    @property
    def passed(self):
        return self.verdict == PASS

    def __repr__(self):
        return (
            f"Residual({self.name!r}, {self.value:.3g} +- {self.stderr:.3g}, "
            f"{self.verdict})"
        )

    def to_dict(self):
        d = {
            "name": self.name,
            "value": self.value,
            "stderr": self.stderr,
            "threshold": self.threshold,
            "verdict": self.verdict,
        }
        d.update(self.extra)
        return d


class KSResult:
    def __init__(self, statistic, n, n_eff, folded=False, q=None):
        self.statistic = float(statistic)
        self.n = int(n)
        self.n_eff = float(n_eff)
        self.folded = folded
        self.q = q
        self.threshold_raw = KS_CRITICAL / math.sqrt(self.n)
        self.threshold_adjusted = KS_CRITICAL / math.sqrt(self.n_eff)

    @property
    def verdict_raw(self):
        return PASS if self.statistic < self.threshold_raw else FAIL

    @property
    def verdict(self):
        return PASS if self.statistic < self.threshold_adjusted else FAIL

    def to_dict(self):
        d = {
            "statistic": self.statistic,
            "n": self.n,
            "n_eff": self.n_eff,
            "folded": self.folded,
            "threshold_raw": self.threshold_raw,
            "threshold_adjusted": self.threshold_adjusted,
            "verdict_raw": self.verdict_raw,
            "verdict_adjusted": self.verdict,
        }
        if self.q is not None:
            d["q"] = self.q
        return d


def batch_means_stderr(series, batch_size):
    """Standard error of the mean of a dependent series from batch means"""
    x = np.asarray(series, dtype=float)
    batch_size = int(batch_size)
    n_batches = len(x) // batch_size if batch_size > 0 else 0
    if n_batches < 2:
        raise InsufficientLengthError(
            f"Need at least two batches of {batch_size}, got {len(x)} samples"
        )
    means = x[: n_batches * batch_size].reshape(n_batches, batch_size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def batch_size_for(lag_one, n):
    """50/(1-|rho|) steps, capped at n/100"""
    window = int(math.ceil(50 / (1 - abs(lag_one))))
    return max(1, min(window, n // 100))


def effective_sample_size(n, lag_one):
    """n (1-|rho|)/(1+|rho|)

    |rho| bounds the correlation of any function of the chain.
    """
    r = abs(lag_one)
    return n * (1 - r) / (1 + r)


def _estimate(h, run):
    """Mean of h (replications x time) and its standard error"""
    reps, length = h.shape
    if reps == 1:
        return float(h.mean()), batch_means_stderr(
            h[0], batch_size_for(run.lag_one, length)
        )
    means = h.mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(reps))


def _require_samples(run, minimum):
    n = run.series.size
    if n < minimum:
        raise InsufficientLengthError(f"Need at least {minimum} samples, got {n}")


def default_dictionary(q):
    """Test functions g(u, v) of the two neighbours"""
    family = PolyFamily(q, MONIC, 4)

    def poly(i, j):
        return lambda u, v: family.evaluate(i, u) * family.evaluate(j, v)

    dictionary = [
        ("1", lambda u, v: np.ones_like(u)),
        ("u", lambda u, v: u),
        ("v", lambda u, v: v),
        ("u^2", lambda u, v: u * u),
        ("uv", lambda u, v: u * v),
        ("v^2", lambda u, v: v * v),
    ]
    for total in (3, 4):
        for i in range(total, -1, -1):
            dictionary.append((f"Q{i}(u)Q{total - i}(v)", poly(i, total - i)))
    return dictionary


def _triples(run):
    s = run.series
    return s[:, :-2], s[:, 1:-1], s[:, 2:]


def _orthogonality_table(run, error, dictionary, u, v):
    table = []
    for name, g in dictionary:
        value, stderr = _estimate(error * g(u, v), run)
        table.append(Residual(name, value, stderr))
    return table


def check_correlations(run, k_max):
    """Empirical autocorrelations at lags 0..k_max against the run's targets"""
    if run.length < 100 * k_max:
        raise InsufficientLengthError(
            f"Need at least {100 * k_max} steps for lag {k_max}, got {run.length}"
        )
    s = run.series
    table = []
    for k in range(k_max + 1):
        target = float(run.correlation_target(k))
        head = s[:, : s.shape[1] - k]
        tail = s[:, k:]
        c0 = float(np.mean(head * head))
        h = head * tail - target * head * head
        value, stderr = _estimate(h, run)
        table.append(
            Residual(
                f"lag{k}",
                value / c0,
                stderr / c0,
                lag=k,
                empirical=target + value / c0,
                target=target,
            )
        )
    return table


def check_conditional_mean(run, dictionary=None, coefficient=None):
    """E[(X_k - a(X_{k-1} + X_{k+1})) g(X_{k-1}, X_{k+1})] = 0"""
    _require_samples(run, MIN_CONDITIONAL_SAMPLES)
    dictionary = dictionary or default_dictionary(run.poly_q)
    a = run.conditional_model()[0] if coefficient is None else coefficient
    u, x, v = _triples(run)
    return _orthogonality_table(run, x - a * (u + v), dictionary, u, v)


def check_conditional_variance(run, dictionary=None, coefficients=None):
    """E[(X_k^2 - Q(X_{k-1}, X_{k+1})) g(X_{k-1}, X_{k+1})] = 0

    coefficients overrides (A, B, C), e.g. for a deliberately wrong model.
    """
    _require_samples(run, MIN_CONDITIONAL_SAMPLES)
    dictionary = dictionary or default_dictionary(run.poly_q)
    A, B, C = run.conditional_model()[1:] if coefficients is None else coefficients
    u, x, v = _triples(run)
    error = x * x - A * (u * u + v * v) - B * u * v - C
    return _orthogonality_table(run, error, dictionary, u, v)


def check_single_conditioning(run):
    """One-sided moments E(X_{k+1} | X_k) = rho X_k and
    E(X_{k+1}^2 | X_k) = rho^2 X_k^2 + 1 - rho^2"""
    if not isinstance(run, ChainRun):
        raise TypeError("Single conditioning only applies to Markov chain runs")
    _require_samples(run, MIN_CONDITIONAL_SAMPLES)
    p = run.params
    c2, c1, c0 = single_step_moments(p.rho, p.A, p.B, p.C, p.D)
    family = PolyFamily(p.q, MONIC, 3)
    tests = [
        ("1", lambda x: np.ones_like(x)),
        ("x", lambda x: x),
        ("x^2", lambda x: x * x),
        ("Q3(x)", lambda x: family.evaluate(3, x)),
    ]
    s = run.series
    x, y = s[:, :-1], s[:, 1:]
    table = []
    for label, error in (
        ("mean", y - p.rho * x),
        ("second", y * y - c2 * x * x - c1 * x - c0),
    ):
        for name, h in tests:
            value, stderr = _estimate(error * h(x), run)
            table.append(Residual(f"{label}:{name}", value, stderr))
    return table


def check_distribution(
    run, measure, folded=False, burn_in=KS_BURN_IN, dependence=None
):
    """KS distance between the run's marginal and the measure

    With folded=True |X| is compared against 2F(x) - 1. dependence is the
    correlation bound used for n_eff; it defaults to the run's lag-one value.
    """
    _require_samples(run, MIN_CONDITIONAL_SAMPLES)
    s = run.series
    burn = min(burn_in, s.shape[1] // 2)
    values = s[:, burn:].ravel()
    n = len(values)
    dependence = run.lag_one if dependence is None else dependence

    if measure.kind == TWO_POINT:
        statistic = 0.0 if folded else abs(float(np.mean(values < 0)) - 0.5)
    elif folded:
        statistic = kstest(
            np.abs(values), lambda x: 2 * measure.cdf(x) - 1
        ).statistic
    else:
        statistic = kstest(values, measure.cdf).statistic
    result = KSResult(
        statistic, n, effective_sample_size(n, dependence), folded=folded, q=measure.q
    )
    logger.debug(f"KS statistic {statistic:.4g} against q={measure.q} (n={n})")
    return result


def fourth_moment(q):
    """E X^4 of the q-normal law"""
    return 2 + q


def check_family_distribution(run, q_grid=None):
    """Folded KS against every q-normal law on a grid plus the fourth moment witness

    Returns a dict; "rejected" is true when no member of the family fits.
    """
    if q_grid is None:
        q_grid = np.round(np.linspace(-0.9, 1.0, 20), 10)
    dependence = getattr(run, "r", run.lag_one)
    fits = []
    for q in q_grid:
        measure = get_measure(float(q))
        fits.append(
            check_distribution(run, measure, folded=True, dependence=dependence)
        )
    s = run.series
    m4 = float(np.mean(s**4))
    # Invert E X^4 = 2 + q
    q_m4 = m4 - fourth_moment(0.0)
    best = min(fits, key=lambda r: r.statistic)
    return {
        "fits": [r.to_dict() for r in fits],
        "best_q": best.q,
        "best_statistic": best.statistic,
        "fourth_moment": m4,
        "fourth_moment_q": q_m4,
        "fourth_moment_in_family": bool(-1 <= q_m4 <= 1),
        "rejected": all(r.verdict == FAIL for r in fits),
    }


class ReversibilityResult:
    def __init__(self, bins, batches, p_values, alpha=REVERSIBILITY_ALPHA):
        self.bins = int(bins)
        self.batches = int(batches)
        # (i, j) -> p-value of the sign test on C_ij - C_ji, i < j
        self.p_values = p_values
        self.threshold = alpha / max(len(p_values), 1)

    @property
    def worst(self):
        if not self.p_values:
            return None, 1.0
        return min(self.p_values.items(), key=lambda item: item[1])

    @property
    def verdict(self):
        return PASS if self.worst[1] >= self.threshold else FAIL

    def __repr__(self):
        cell, p = self.worst
        return f"ReversibilityResult(bins={self.bins}, worst={cell} p={p:.3g})"

    def to_dict(self):
        cell, p = self.worst
        return {
            "bins": self.bins,
            "batches": self.batches,
            "pairs": len(self.p_values),
            "worst_cell": list(cell) if cell is not None else None,
            "min_p_value": p,
            "threshold": self.threshold,
            "verdict": self.verdict,
        }


def _bin_index(values, bins):
    levels = np.unique(values)
    if len(levels) <= bins:
        return np.searchsorted(levels, values), len(levels)
    edges = np.unique(np.quantile(values, np.linspace(0, 1, bins + 1)))
    nb = len(edges) - 1
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, nb - 1)
    return idx, nb


def check_reversibility(
    run, bins=REVERSIBILITY_BINS, batches=REVERSIBILITY_BATCHES
):
    """Sign test for exchange symmetry of the law of (X_n, X_{n+1})

    Pairs are counted on quantile cells, separately in each of `batches`
    consecutive time blocks. For a stationary reversible chain C_ij - C_ji is
    symmetric about 0 in every block, so the number of blocks with a positive
    difference is Binomial(n, 1/2). Cells are Bonferroni corrected.
    """
    s = run.series
    steps = s.shape[1] - 1
    if steps < 2 * batches:
        raise InsufficientLengthError(
            f"Need at least {2 * batches + 1} steps for {batches} batches, "
            f"got {steps + 1}"
        )
    idx, nb = _bin_index(s, bins)
    block = np.arange(steps) * batches // steps
    flat = (block * nb + idx[:, :-1]) * nb + idx[:, 1:]
    counts = np.bincount(flat.ravel(), minlength=batches * nb * nb)
    counts = counts.reshape(batches, nb, nb)

    p_values = {}
    for i, j in itertools.combinations(range(nb), 2):
        diff = counts[:, i, j] - counts[:, j, i]
        n = int(np.count_nonzero(diff))
        k = int(np.count_nonzero(diff > 0))
        p = 2 * binom.cdf(min(k, n - k), n, 0.5) if n else 1.0
        p_values[(i, j)] = min(1.0, float(p))
    result = ReversibilityResult(nb, batches, p_values)
    logger.debug(f"Reversibility: {result!r}")
    return result


def enumerate_two_state(rho, dictionary=None):
    """Exact law of (X_{k-1}, X_k, X_{k+1}) for the two-state chain and the
    exact residuals of the conditional mean and variance identities"""
    p = derive_params_from_q(rho, -1.0)
    dictionary = dictionary or default_dictionary(-1.0)
    stay = (1 + rho) / 2
    triples = []
    for u, x, v in itertools.product((-1.0, 1.0), repeat=3):
        pux = stay if u == x else 1 - stay
        pxv = stay if x == v else 1 - stay
        triples.append((u, x, v, 0.5 * pux * pxv))

    u, x, v, prob = (np.array(col) for col in zip(*triples))
    mean_error = x - p.a * (u + v)
    var_error = x * x - p.quadratic_form(u, v)
    return {
        "triples": triples,
        "mean_residuals": {
            name: float(np.sum(prob * mean_error * g(u, v))) for name, g in dictionary
        },
        "variance_residuals": {
            name: float(np.sum(prob * var_error * g(u, v))) for name, g in dictionary
        },
    }


def binned_conditional_moments(run, bins=8):
    """Coarse E(X_k | X_{k-1}, X_{k+1}) and E(X_k^2 | ...) on quantile cells"""
    a, A, B, C = run.conditional_model()
    u, x, v = (arr.ravel() for arr in _triples(run))
    edges = np.unique(np.quantile(u, np.linspace(0, 1, bins + 1)))
    iu = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, len(edges) - 2)
    iv = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, len(edges) - 2)
    rows = []
    for i in range(len(edges) - 1):
        for j in range(len(edges) - 1):
            cell = (iu == i) & (iv == j)
            count = int(cell.sum())
            if count == 0:
                continue
            uc, vc = u[cell], v[cell]
            predicted_second = A * (uc**2 + vc**2) + B * uc * vc + C
            rows.append(
                {
                    "u": float(uc.mean()),
                    "v": float(vc.mean()),
                    "count": count,
                    "mean": float(x[cell].mean()),
                    "predicted_mean": float(np.mean(a * (uc + vc))),
                    "second": float(np.mean(x[cell] ** 2)),
                    "predicted_second": float(np.mean(predicted_second)),
                }
            )
    return rows


class VerifyReport:
    def __init__(self, model, n_samples, seed):
        self.model = model
        self.n_samples = n_samples
        self.seed = seed
        self.correlation_residuals = []
        self.regression_residuals = []
        self.variance_residuals = []
        self.single_cond_residuals = []
        self.informational = []
        self.ks = None
        self.reversibility = None
        self.family = None
        self.diagnostics = None
        self.support_ok = None
        self.notes = []

    def _scored(self):
        return itertools.chain(
            self.correlation_residuals,
            self.regression_residuals,
            self.variance_residuals,
            self.single_cond_residuals,
        )

    @property
    def failures(self):
        failed = [r.name for r in self._scored() if not r.passed]
        if self.ks is not None and self.ks.verdict != PASS:
            failed.append("ks")
        if self.reversibility is not None and self.reversibility.verdict != PASS:
            failed.append("reversibility")
        if self.support_ok is False:
            failed.append("support")
        if self.family is not None and not self.family["rejected"]:
            failed.append("family_rejection")
        return failed

    @property
    def all_passed(self):
        return not self.failures

    def to_dict(self):
        d = {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "correlation_residuals": [r.to_dict() for r in self.correlation_residuals],
            "regression_residuals": [r.to_dict() for r in self.regression_residuals],
            "variance_residuals": [r.to_dict() for r in self.variance_residuals],
            "single_cond_residuals": [r.to_dict() for r in self.single_cond_residuals],
            "informational": [r.to_dict() for r in self.informational],
            "ks": self.ks.to_dict() if self.ks is not None else None,
            "reversibility": (
                self.reversibility.to_dict()
                if self.reversibility is not None
                else None
            ),
            "support_ok": self.support_ok,
            "notes": self.notes,
            "failures": self.failures,
            "passed": self.all_passed,
        }
        if self.family is not None:
            d["family"] = self.family
        if self.diagnostics is not None:
            d["diagnostics"] = self.diagnostics
        return d


def verify_run(run, measure=None, k_max=6, bins=None):
    """Every check family on a single chain run"""
    measure = measure or get_measure(run.q)
    model = run.params.to_dict()
    model["kind"] = run.params.kind
    model["sampler"] = run.sampler_kind
    report = VerifyReport(model, run.length, seed_entropy(run.seed))
    report.correlation_residuals = check_correlations(run, k_max)
    report.regression_residuals = check_conditional_mean(run)
    report.variance_residuals = check_conditional_variance(run)
    report.single_cond_residuals = check_single_conditioning(run)
    report.ks = check_distribution(run, measure)
    report.reversibility = check_reversibility(run)
    report.notes.append(
        "Two-sided identities are checked with test functions of the nearest "
        "neighbours; the Markov property makes this sufficient."
    )
    if run.sampler_kind == TWO_STATE:
        report.notes.append(
            f"Empirical transition matrix: {run.transition_matrix().tolist()}"
        )
    report.support_ok = run.within_support()
    if bins:
        report.diagnostics = binned_conditional_moments(run, bins)
    for r in report.failures:
        logger.info(f"Check failed: {r}")
    return report


def verify_counterexample(ensemble, k_max=6, q_grid=None, bins=None):
    """Checks showing that the counterexample meets the nearest-neighbour
    identities but not the global conclusions"""
    alpha, A, B, C = ensemble.conditional_model()
    model = {
        "rho": ensemble.rho,
        "a": ensemble.a,
        "b": ensemble.b,
        "r": ensemble.r,
        "alpha": alpha,
        "A": A,
        "B": B,
        "C": C,
        "replications": len(getattr(ensemble, "runs", [ensemble])),
    }
    report = VerifyReport(model, ensemble.series.size, seed_entropy(ensemble.seed))
    report.correlation_residuals = check_correlations(ensemble, k_max)
    report.regression_residuals = check_conditional_mean(ensemble)
    report.variance_residuals = check_conditional_variance(ensemble)

    # Geometric correlations with the field's own lag-one value do not hold
    s = ensemble.series
    rho_z = ensemble.lag_one
    for k in range(2, k_max + 1, 2):
        head, tail = s[:, : s.shape[1] - k], s[:, k:]
        empirical = float(np.mean(head * tail) / np.mean(head * head))
        report.informational.append(
            Residual(f"geometric_lag{k}", empirical - rho_z**k, 0.0, target=rho_z**k)
        )
    # The constant 1 - rho^2 is only right for a = 1
    printed = check_conditional_variance(
        ensemble,
        dictionary=default_dictionary(1.0)[:1],
        coefficients=(A, B, 1 - ensemble.rho**2),
    )[0]
    printed.name = "constant_1-rho^2"
    report.informational.append(printed)

    report.family = check_family_distribution(ensemble, q_grid)
    report.notes.append(
        "The field is not Markov; only the two-sided nearest-neighbour form of "
        "the identities is checkable."
    )
    if bins:
        report.diagnostics = binned_conditional_moments(ensemble, bins)
    return report
