from __future__ import annotations

import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwlab.errors import ConfigError, DomainError, RegimeError
from brwlab.gw import (
    Regime,
    boettcher_bn,
    complementary_pgf_iterate,
    exact_zn_distribution,
    extinction_prob,
    gw_rate_IGW,
    pgf_eval,
    pgf_iterate,
    reachable_values,
    validate_offspring,
)

LAW = {0: 0.25, 2: 0.75}


def quadratic_root(a, b, c):
    """Smaller root of a s^2 + b s + c = 0, as an independent oracle for q."""
    disc = math.sqrt(b * b - 4 * a * c)
    return min((-b - disc) / (2 * a), (-b + disc) / (2 * a))


@st.composite
def supercritical_pmfs(draw):
    size = draw(st.integers(3, 7))
    weights = draw(st.lists(st.floats(0.0, 1.0), min_size=size, max_size=size))
    total = sum(weights)
    if total == 0:
        weights[-1] = 1.0
        total = 1.0
    probs = [w / total for w in weights]
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    mean = sum(k * p for k, p in enumerate(probs))
    if mean <= 1.05 or probs[-1] < 0:
        probs = [0.2] + [0.0] * (size - 2) + [0.8]  # mean 0.8 (size - 1) >= 1.6
    return {k: p for k, p in enumerate(probs)}


def test_validate_example_schroeder():
    law = validate_offspring(LAW)
    assert law.mean_m == pytest.approx(1.5, abs=1e-15)
    assert law.extinction_q == pytest.approx(quadratic_root(0.75, -1.0, 0.25), abs=1e-13)
    assert law.extinction_q == pytest.approx(1 / 3, abs=1e-13)
    assert law.rho == pytest.approx(-math.log(2 * 0.75 * (1 / 3)), abs=1e-12)
    assert law.k_star == 2
    assert law.regime is Regime.SCHROEDER


def test_validate_example_boettcher():
    law = validate_offspring({2: 0.5, 3: 0.5})
    assert law.regime is Regime.BOETTCHER
    assert law.k_star == 2
    assert law.extinction_q == 0.0
    assert law.rho == math.inf


def test_rho_when_no_death():
    law = validate_offspring({1: 0.5, 2: 0.5})
    assert law.extinction_q == 0.0
    assert law.rho == pytest.approx(math.log(2), abs=1e-14)


def test_validate_accepts_json_keys():
    law = validate_offspring({"0": 0.25, "2": 0.75})
    assert law.pmf == {0: 0.25, 2: 0.75}


@pytest.mark.parametrize(
    "pmf",
    [
        {0: 0.5, 2: 0.4},
        {0: 0.5, 2: 0.5},
        {0: 0.7, 2: 0.3},
        {1: 1.0},
        {0: -0.1, 2: 1.1},
        {"x": 1.0},
        {},
    ],
)
def test_validate_rejects(pmf):
    with pytest.raises(ConfigError):
        validate_offspring(pmf)


def test_lenient_validation_for_control_laws():
    single = validate_offspring({1: 1.0}, supercritical=False)
    assert single.mean_m == 1.0 and single.extinction_q == 0.0
    dead = validate_offspring({0: 1.0}, supercritical=False)
    assert dead.extinction_q == 1.0 and not dead.supercritical


def test_pgf_examples():
    law = validate_offspring(LAW)
    assert pgf_eval(law, 0.0) == 0.25
    assert pgf_eval(law, 1.0) == 1.0
    assert pgf_eval(law, 0.25) == pytest.approx(19 / 64, abs=1e-15)


@pytest.mark.parametrize("s", [-0.1, 1.1, math.nan])
def test_pgf_domain(s):
    with pytest.raises(DomainError):
        pgf_eval(validate_offspring(LAW), s)


def test_extinction_examples():
    assert extinction_prob(validate_offspring({2: 1.0})) == 0.0
    law = validate_offspring({0: 0.2, 1: 0.2, 2: 0.6})
    assert extinction_prob(law) == pytest.approx(quadratic_root(0.6, -0.8, 0.2), abs=1e-13)
    assert extinction_prob(law) == pytest.approx(1 / 3, abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(supercritical_pmfs())
def test_pgf_monotone_convex(pmf):
    law = validate_offspring(pmf)
    s = np.linspace(0.0, 1.0, 201)
    f = pgf_eval(law, s)
    assert np.all(np.diff(f) >= -1e-15)
    assert np.all(np.diff(f, 2) >= -1e-10)
    assert pgf_eval(law, 1.0) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(supercritical_pmfs())
def test_extinction_is_fixed_point(pmf):
    law = validate_offspring(pmf)
    q = law.extinction_q
    assert abs(pgf_eval(law, q) - q) <= 1e-12
    assert q < 1.0


@settings(max_examples=30, deadline=None)
@given(supercritical_pmfs(), st.integers(0, 8))
def test_zn_probs0_matches_pgf_iteration(pmf, n):
    law = validate_offspring(pmf)
    z = exact_zn_distribution(law, n, 64)
    assert z.probs[0] == pytest.approx(pgf_iterate(law, 0.0, n), abs=1e-12)
    assert math.fsum(z.probs) + z.tail_mass == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("pmf", [LAW, {0: 0.2, 1: 0.2, 2: 0.6}, {1: 0.5, 2: 0.5}])
def test_zn_mean_is_m_to_the_n(pmf):
    law = validate_offspring(pmf)
    for n in range(13):
        z = exact_zn_distribution(law, n, 2**n * law.max_offspring)
        assert not z.truncated and z.tail_mass == 0.0
        assert z.mean() == pytest.approx(law.mean_m**n, rel=1e-8)


def test_zn_examples():
    law = validate_offspring(LAW)
    z0 = exact_zn_distribution(law, 0, 4)
    assert z0.probs[1] == 1.0 and z0.probs.sum() == 1.0
    assert exact_zn_distribution(law, 2, 16).probs[0] == pytest.approx(19 / 64, abs=1e-15)
    z = exact_zn_distribution(validate_offspring({2: 1.0}), 5, 32)
    assert z.probs[32] == 1.0 and z.probs.sum() == 1.0


def test_zn_truncation_is_flagged():
    law = validate_offspring(LAW)
    z = exact_zn_distribution(law, 6, 8)
    assert z.truncated and z.tail_mass > 0
    full = exact_zn_distribution(law, 6, 64)
    np.testing.assert_allclose(z.probs, full.probs[:9], atol=1e-15)


def test_zn_cap_too_small():
    with pytest.raises(DomainError):
        exact_zn_distribution(validate_offspring({0: 0.2, 5: 0.8}), 1, 4)


def test_reachable_examples():
    assert reachable_values(validate_offspring(LAW), 1, 10) == {0, 2}
    assert reachable_values(validate_offspring({2: 0.5, 3: 0.5}), 2, 20) == set(range(2, 10))
    assert reachable_values(validate_offspring({1: 1.0}, supercritical=False), 5, 10) == {1}


def test_reachable_by_enumeration():
    law = validate_offspring({1: 0.3, 3: 0.7})
    level, seen = {1}, set()
    for _ in range(3):
        nxt = set()
        for z in level:
            # all sums of z offspring counts from {1, 3}
            nxt |= {z + 2 * j for j in range(z + 1)}
        level = {v for v in nxt if v <= 30}
        seen |= level
    assert reachable_values(law, 3, 30) == seen


def test_igw_examples():
    law = validate_offspring(LAW)
    log_m = math.log(1.5)
    assert gw_rate_IGW(law, 0.0) == pytest.approx(math.log(2), abs=1e-12)
    assert gw_rate_IGW(law, log_m) == 0.0
    assert gw_rate_IGW(law, log_m / 2) == pytest.approx(math.log(2) / 2, abs=1e-12)
    with pytest.raises(DomainError):
        gw_rate_IGW(law, -0.1)
    with pytest.raises(RegimeError):
        gw_rate_IGW(validate_offspring({2: 0.5, 3: 0.5}), 0.1)


def test_bn_examples():
    law = validate_offspring({2: 0.5, 4: 0.5})  # m = 3, k* = 2
    # both k_n values sit below (k*)^n = 1024, which the function flags
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert boettcher_bn(law, 10, 1000) == 2
        assert boettcher_bn(law, 10, 512) == 0
        assert boettcher_bn(law, 10, 2**10 // 2) == 0
    with pytest.raises(DomainError):
        boettcher_bn(law, 3, 10**6)
    with pytest.raises(RegimeError):
        boettcher_bn(validate_offspring(LAW), 3, 10)


def test_bn_warns_below_minimal_growth():
    law = validate_offspring({2: 0.5, 4: 0.5})
    with pytest.warns(UserWarning):
        boettcher_bn(law, 10, 100)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 40), st.integers(0, 60))
def test_bn_is_minimal(n, shift):
    law = validate_offspring({2: 0.5, 4: 0.5})
    k_n = 2**n + shift * 3**n // 61
    try:
        j = boettcher_bn(law, n, k_n)
    except DomainError:
        assert 3**n < 2 * k_n
        return
    m = Fraction(3)
    assert m**j * 2 ** (n - j) >= 2 * k_n
    assert j == 0 or m ** (j - 1) * 2 ** (n - j + 1) < 2 * k_n


def test_complementary_iteration_matches_direct():
    law = validate_offspring(LAW)
    u = np.array([0.0, 1e-3, 0.3, 1.0])
    direct = 1.0 - pgf_iterate(law, 1.0 - u, 4)
    np.testing.assert_allclose(complementary_pgf_iterate(law, u, 4), direct, atol=1e-14)
    tiny = complementary_pgf_iterate(law, 1e-300, 3)
    assert tiny == pytest.approx(1.5**3 * 1e-300, rel=1e-9)
