from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from brwlab.errors import ConfigError, DomainError, ResourceError
from brwlab.estimate import (
    Event,
    TailEstimate,
    TrendKind,
    clopper_pearson,
    estimate_event,
    ind_upper_tail,
    lattice_cramer_rate,
    rate_trend,
    semianalytic_ind_tail,
    sumasmax_ratio,
    trend_gw_lower,
    trend_ind_upper,
)
from brwlab.gw import exact_zn_distribution, validate_offspring
from brwlab.oracle import conditional_cdf, brw_max_cdf_exact, ind_max_cdf_exact, walk_cdf
from brwlab.rates import rate_I
from brwlab.simulate import SimConfig, dkw_radius
from brwlab.steps import cdf, make_centered, make_lattice_surrogate, quantile

PM = make_lattice_surrogate(1, {-1: 0.5, 1: 0.5})
LAW = validate_offspring({0: 0.25, 2: 0.75})
SINGLE = validate_offspring({1: 1.0}, supercritical=False)


def test_clopper_pearson_closed_forms():
    n, level = 50, 0.99
    lo, hi = clopper_pearson(0, n, level)
    assert lo == 0.0 and hi == pytest.approx(1 - 0.005 ** (1 / n), rel=1e-12)
    lo, hi = clopper_pearson(n, n, level)
    assert hi == 1.0 and lo == pytest.approx(0.005 ** (1 / n), rel=1e-12)
    with pytest.raises(DomainError):
        clopper_pearson(3, 2)


def test_clopper_pearson_coverage():
    gen = np.random.default_rng(2024)
    for p, trials in ((0.1, 200), (0.01, 500)):
        hits = gen.binomial(trials, p, size=1000)
        covered = sum(lo <= p <= hi for lo, hi in (clopper_pearson(int(k), trials, 0.99) for k in hits))
        assert covered / 1000 >= 0.99 - 0.02


def test_tail_estimate_invariants():
    est = TailEstimate.from_counts(7, 1000, 5)
    assert est.ci_low <= est.p_hat <= est.ci_high
    assert est.empirical_rate == pytest.approx(-math.log(0.007) / 5)
    low, high = est.rate_bracket
    assert low <= est.empirical_rate <= high
    assert math.isnan(TailEstimate.from_counts(0, 1000, 5).empirical_rate)


def test_semianalytic_examples():
    z = exact_zn_distribution(LAW, 3, 8)
    assert semianalytic_ind_tail(z, 1.0) == 0.0
    assert semianalytic_ind_tail(z, 0.0) == pytest.approx(1 - z.probs[0], abs=1e-15)
    assert semianalytic_ind_tail(z, 0.0, conditional=True) == pytest.approx(1.0, abs=1e-15)
    two = exact_zn_distribution(validate_offspring({2: 1.0}), 1, 2)
    assert semianalytic_ind_tail(two, 0.75) == pytest.approx(7 / 16, abs=1e-15)
    with pytest.raises(DomainError):
        semianalytic_ind_tail(exact_zn_distribution(LAW, 5, 8), 0.5)


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_semianalytic_matches_oracle(n):
    z = exact_zn_distribution(LAW, n, 2**n)
    walk = walk_cdf(PM, n)
    oracle = ind_max_cdf_exact(PM, LAW, n)
    for k in range(-n, n + 1):
        value = semianalytic_ind_tail(z, walk.at_index(k))
        assert value == pytest.approx(1.0 - oracle.at_index(k), abs=1e-12)


def test_ind_upper_tail_methods_agree():
    p_law, m_law = ind_upper_tail(PM, LAW, 10, 6)
    assert m_law == "zn-law"
    from brwlab.oracle import ind_max_upper_tail

    assert p_law == pytest.approx(ind_max_upper_tail(PM, LAW, 10, 6), rel=1e-10)
    assert ind_upper_tail(PM, LAW, 20, 12)[1] == "pgf"


def test_estimate_event_always_true():
    c = SimConfig(LAW, make_centered(0.5, 1.0, 1.0), 3, seed=1)
    est = estimate_event(c, Event("lower", 1e9), 200)
    assert est.p_hat == 1.0 and est.empirical_rate == 0.0


def test_estimate_event_single_walk_against_quadrature():
    step = make_centered(0.5, 1.0, 1.0)
    c = SimConfig(SINGLE, step, 2, seed=4)
    x = 1.5
    est = estimate_event(c, Event("upper", x), 200_000)
    assert est.analytic_rate == rate_I(step, x)
    y = x * c.scale
    # P(X1 + X2 >= y) = E[P(X >= y - X1)], integrated over the quantile of X1
    exact, _ = integrate.quad(lambda u: 1.0 - cdf(step, y - quantile(step, u)), 0.0, 1.0, limit=200, epsabs=1e-12)
    assert est.ci_low <= exact <= est.ci_high
    low, high = est.rate_bracket
    assert low <= -math.log(exact) / 2 <= high


def test_estimate_event_lattice_against_oracle():
    c = SimConfig(LAW, PM, 4, seed=9)
    replicas = 20_000
    exact = conditional_cdf(brw_max_cdf_exact(PM, LAW, 4))
    for x in (-2.0, 0.0, 2.0):
        up = estimate_event(c, Event("upper", x), replicas)
        assert abs(up.p_hat - (1.0 - exact.at_index(int(x) - 1))) <= dkw_radius(replicas)
        low = estimate_event(c, Event("lower", x), replicas)
        assert abs(low.p_hat - exact.at_index(int(x))) <= dkw_radius(replicas)


def test_estimate_event_errors():
    c = SimConfig(LAW, PM, 4)
    with pytest.raises(ConfigError):
        estimate_event(c, Event("upper", 0.0), 99)
    capped = SimConfig(validate_offspring({2: 1.0}), PM, 4, population_cap=10)
    with pytest.raises(ResourceError):
        estimate_event(capped, Event("upper", 0.0), 100)
    unconditioned = SimConfig(validate_offspring({2: 1.0}), PM, 4, population_cap=10, condition_on_survival=False)
    with pytest.raises(ResourceError):
        estimate_event(unconditioned, Event("upper", 0.0), 100)
    with pytest.raises(ValueError):
        Event("sideways", 0.0)


def test_sumasmax_single_step_is_unbiased():
    step = make_centered(0.5, 1.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = sumasmax_ratio(step, 1, 20.0, 10**6, seed=3)
    assert res.ci_low <= 1.0 <= res.ci_high
    assert res.ratio == pytest.approx(1.0, abs=0.1)


def test_sumasmax_warns_outside_regime():
    step = make_centered(0.5, 1.0, 1.0)
    with pytest.warns(RuntimeWarning, match="asymptotic regime"):
        res = sumasmax_ratio(step, 2, 1e-3, 20_000)
    assert res.ratio < 0.6 and res.warnings
    with pytest.raises(DomainError):
        sumasmax_ratio(step, 2, 0.0, 100)


def test_sumasmax_zero_successes():
    res = sumasmax_ratio(make_centered(0.5, 1.0, 1.0), 2, 400.0, 1000)
    assert res.successes == 0 and math.isnan(res.ratio) and res.ci_low == 0.0 and res.ci_high > 0


def test_lattice_cramer_closed_form():
    for x in (0.0, 0.2, 0.5, 0.9):
        expected = 0.5 * ((1 + x) * math.log(1 + x) + (1 - x) * math.log(1 - x))
        assert lattice_cramer_rate(PM, x) == pytest.approx(expected, abs=1e-10)
    assert lattice_cramer_rate(PM, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert lattice_cramer_rate(PM, 1.5) == math.inf


def test_single_walk_trend_gap_decreases():
    table = trend_ind_upper(PM, SINGLE, 0.5, [10, 20, 40, 80, 160])
    assert table.gaps_decreasing
    assert all(r.analytic_rate == pytest.approx(lattice_cramer_rate(PM, 0.5)) for r in table.rows)


def test_gw_lower_trend_converges_to_rho():
    for pmf in ({0: 0.25, 2: 0.75}, {0: 0.2, 1: 0.2, 2: 0.6}, {1: 0.5, 2: 0.5}):
        law = validate_offspring(pmf)
        table = trend_gw_lower(law, [1, 2, 4, 8, 16, 30])
        assert table.rows[-1].gap < 1e-6
        assert table.rows[-1].analytic_rate == law.rho


def test_trend_degenerate_and_errors():
    table = rate_trend("GW_LOWER", [0], offspring=LAW)
    assert table.rows[0].undefined and table.gaps == []
    assert rate_trend(TrendKind.IND_UPPER, [0], lattice=PM, offspring=LAW, x=0.5).rows[0].undefined
    with pytest.raises(ConfigError):
        rate_trend("GW_LOWER", [3, 2], offspring=LAW)
    with pytest.raises(ConfigError):
        rate_trend("NOPE", [1])


def test_trend_csv_header():
    csv_text = trend_gw_lower(LAW, [1, 2]).to_csv()
    assert csv_text.splitlines()[0] == "n,x,kind,p_hat,ci_low,ci_high,empirical_rate,analytic_rate"
