from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from brwlab.errors import DomainError, ResourceError
from brwlab.gw import complementary_pgf_iterate, pgf_eval, validate_offspring
from brwlab.oracle import (
    LatticeDist,
    brw_max_cdf_exact,
    conditional_cdf,
    domination_check_exact,
    ind_max_cdf_exact,
    ind_max_upper_tail,
    shared_step_check,
    walk_cdf,
    walk_upper_tail,
)
from brwlab.steps import make_lattice_surrogate

PM = make_lattice_surrogate(1, {-1: 0.5, 1: 0.5})
LAZY = make_lattice_surrogate(0.5, {-2: 0.1, -1: 0.2, 0: 0.3, 1: 0.4})
LAW = validate_offspring({0: 0.25, 2: 0.75})
SINGLE = validate_offspring({1: 1.0}, supercritical=False)


def enumerate_max(pmf, steps, depth):
    """All (probability, max position) outcomes of a depth-limited tree, by brute force."""
    if depth == 0:
        return [(Fraction(1), 0)]
    out = []
    for k, pk in pmf.items():
        if k == 0:
            out.append((pk, None))
            continue
        child = [(ps * p, None if m is None else s + m) for s, ps in steps.items() for p, m in enumerate_max(pmf, steps, depth - 1)]
        for combo in itertools.product(child, repeat=k):
            prob = pk * math.prod(c[0] for c in combo)
            tops = [c[1] for c in combo if c[1] is not None]
            out.append((prob, max(tops) if tops else None))
    return out


def test_brw_examples():
    assert brw_max_cdf_exact(PM, SINGLE, 2).at_index(0) == pytest.approx(0.75, abs=1e-15)
    zero = brw_max_cdf_exact(PM, LAW, 0)
    assert zero.at_index(-1) == 0.0 and zero.at_index(0) == 1.0 and zero.extinct_mass == 0.0
    one = brw_max_cdf_exact(PM, LAW, 1)
    assert one.at_index(-1) == pytest.approx(7 / 16, abs=1e-15)
    assert one.extinct_mass == 0.25


def test_brw_matches_tree_enumeration():
    pmf = {0: Fraction(1, 4), 2: Fraction(3, 4)}
    steps = {-1: Fraction(1, 2), 1: Fraction(1, 2)}
    outcomes = enumerate_max(pmf, steps, 2)
    assert sum(p for p, _ in outcomes) == 1
    dist = brw_max_cdf_exact(PM, LAW, 2)
    for x in range(-3, 3):
        exact = sum(p for p, m in outcomes if m is None or m <= x)
        assert dist.at_index(x) == pytest.approx(float(exact), abs=1e-15)


def test_ind_examples():
    for n in range(5):
        np.testing.assert_allclose(ind_max_cdf_exact(PM, SINGLE, n).cdf, walk_cdf(PM, n).cdf, atol=1e-15)
    np.testing.assert_allclose(ind_max_cdf_exact(LAZY, LAW, 1).cdf, brw_max_cdf_exact(LAZY, LAW, 1).cdf, rtol=0, atol=1e-15)
    two = ind_max_cdf_exact(PM, LAW, 2)
    f = lambda s: 0.25 + 0.75 * s * s
    assert two.at_index(0) == pytest.approx(f(f(0.75)), abs=1e-15)
    assert f(0.75) == pytest.approx(43 / 64, abs=1e-15)


def test_conditional_examples():
    walk = walk_cdf(PM, 3)
    np.testing.assert_array_equal(conditional_cdf(walk).cdf, walk.cdf)
    cond = conditional_cdf(brw_max_cdf_exact(PM, LAW, 1))
    assert cond.at_index(-1) == pytest.approx(0.25, abs=1e-15)
    assert cond.extinct_mass == 0.0
    with pytest.raises(DomainError):
        conditional_cdf(brw_max_cdf_exact(PM, validate_offspring({0: 1.0}, supercritical=False), 1))


def test_domination_examples():
    for n in (0, 1):
        res = domination_check_exact(PM, LAW, n)
        assert res.holds and res.max_violation == 0.0
    for n in range(2, 7):
        assert domination_check_exact(PM, LAW, n).holds
    for n in range(6):
        res = domination_check_exact(LAZY, SINGLE, n)
        assert res.holds and res.max_violation <= 1e-15


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([{0: 0.25, 2: 0.75}, {0: 0.2, 1: 0.2, 2: 0.6}, {1: 0.5, 3: 0.5}, {2: 0.5, 3: 0.5}]), st.sampled_from([PM, LAZY]), st.integers(0, 7))
def test_exact_cdfs_are_monotone_with_right_limits(pmf, lattice, n):
    law = validate_offspring(pmf)
    for dist in (brw_max_cdf_exact(lattice, law, n), ind_max_cdf_exact(lattice, law, n)):
        assert np.all(np.diff(dist.cdf) >= -1e-12)
        assert dist.cdf[-1] == pytest.approx(1.0, abs=1e-12)
        assert np.all(dist.cdf >= dist.extinct_mass - 1e-12)
        assert dist.at_index(dist.min_index - 1) == dist.extinct_mass
    assert domination_check_exact(lattice, law, n).holds


def test_single_line_equals_binomial_walk():
    for n in range(12):
        dist = brw_max_cdf_exact(PM, SINGLE, n)
        k = np.arange(-n, n + 1)
        # S_n = 2 B - n with B ~ Binomial(n, 1/2)
        expected = binom.cdf(np.floor((k + n) / 2), n, 0.5)
        np.testing.assert_allclose(dist.at_index(k), expected, atol=1e-12)


def test_shared_step_dominates():
    for lattice in (PM, LAZY):
        for pmf in ({0: 0.25, 2: 0.75}, {1: 0.5, 3: 0.5}, {2: 0.4, 4: 0.6}):
            res = shared_step_check(lattice, validate_offspring(pmf))
            assert res.holds
    with pytest.raises(ResourceError):
        shared_step_check(PM, validate_offspring({0: 0.1, 9: 0.9}))


def test_population_mean_from_pgf():
    for pmf in ({0: 0.25, 2: 0.75}, {1: 0.5, 2: 0.3, 4: 0.2}):
        law = validate_offspring(pmf)
        for n in range(1, 10):
            # 1 - f_n(1 - u) = m^n u + O(u^2)
            u = 1e-10
            assert complementary_pgf_iterate(law, u, n) / u == pytest.approx(law.mean_m**n, rel=1e-6)


def test_upper_tails_keep_precision():
    n = 60
    # P(S_60 >= 60) = 2^-60
    assert walk_upper_tail(PM, n, n) == pytest.approx(2.0**-60, rel=1e-12)
    tail = ind_max_upper_tail(PM, LAW, 8, 8)
    assert tail == pytest.approx(1.5**8 * 2.0**-8, rel=0.2)
    assert tail == pytest.approx(1 - ind_max_cdf_exact(PM, LAW, 8).at_index(7), rel=1e-9)


def test_memory_bound():
    with pytest.raises(ResourceError):
        brw_max_cdf_exact(PM, LAW, 10, max_points=15)
    with pytest.raises(DomainError):
        brw_max_cdf_exact(PM, LAW, -1)


def test_csv_and_sidecar():
    dist = brw_max_cdf_exact(PM, LAW, 1)
    lines = dist.to_csv().splitlines()
    assert lines[0] == "x,cdf" and len(lines) == 4
    assert dist.sidecar() == {"h": 1.0, "extinct_mass": 0.25, "n": 1}
    assert isinstance(dist, LatticeDist)
