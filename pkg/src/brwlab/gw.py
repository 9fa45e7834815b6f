"""Galton-Watson analytics for finite offspring laws.

Covers the probability generating function, extinction probability,
Schroeder/Boettcher classification, exact laws of the population size Z_n
and the lower-deviation quantities (rho, I^GW, b_n, reachable values).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError, RegimeError

SUM_TOL = 1e-12
FIXED_POINT_TOL = 1e-14
FIXED_POINT_MAX_ITER = 10**6


class Regime(str, enum.Enum):
    SCHROEDER = "Schroeder"
    BOETTCHER = "Boettcher"


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Finite offspring distribution together with its derived analytics.

    ``probs[k]`` is p(k) for k = 0..max support. Build instances through
    :func:`validate_offspring`, which fills in every derived field.
    """

    probs: np.ndarray
    mean_m: float
    extinction_q: float
    k_star: int | None
    regime: Regime
    rho: float
    supercritical: bool = True
    _pmf: dict = field(default_factory=dict, repr=False)

    @property
    def pmf(self) -> dict[int, float]:
        return dict(self._pmf)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    @property
    def max_offspring(self) -> int:
        return int(self.probs.size - 1)

    def to_json(self) -> dict[str, float]:
        return {str(k): float(v) for k, v in self._pmf.items()}

    def __repr__(self) -> str:
        return (
            f"OffspringLaw(pmf={self._pmf}, m={self.mean_m:.6g}, q={self.extinction_q:.6g}, "
            f"k*={self.k_star}, regime={self.regime.value}, rho={self.rho:.6g})"
        )


def _parse_pmf(pmf: Mapping) -> dict[int, float]:
    parsed: dict[int, float] = {}
    for key, value in pmf.items():
        try:
            k = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"offspring key {key!r} is not an integer") from None
        if isinstance(key, float) and key != k:
            raise ConfigError(f"offspring key {key!r} is not an integer")
        if k < 0:
            raise ConfigError(f"offspring count {k} is negative")
        p = float(value)
        if not math.isfinite(p) or p < 0:
            raise ConfigError(f"p({k}) = {value!r} is not a non-negative probability")
        if k in parsed:
            raise ConfigError(f"offspring count {k} given twice")
        parsed[k] = p
    if not parsed:
        raise ConfigError("offspring pmf is empty")
    return parsed


def validate_offspring(pmf: Mapping, *, supercritical: bool = True) -> OffspringLaw:
    """Validate a finite offspring pmf and compute m, q, k*, regime and rho.

    Keys may be integers or integer strings (the JSON form). With
    ``supercritical=False`` the m > 1 requirement is dropped so that
    degenerate control laws such as {1: 1} or {0: 1} can drive the
    simulators and oracles; the derived fields are still filled in.
    """
    parsed = _parse_pmf(pmf)
    total = math.fsum(parsed.values())
    if abs(total - 1.0) > SUM_TOL:
        raise ConfigError(f"offspring probabilities sum to {total!r}, not 1")

    nonzero = {k: p for k, p in sorted(parsed.items()) if p > 0}
    probs = np.zeros(max(nonzero) + 1)
    for k, p in nonzero.items():
        probs[k] = p
    mean = math.fsum(k * p for k, p in nonzero.items())

    if supercritical:
        if probs.size > 1 and probs[1] == 1.0:
            raise ConfigError("p(1) = 1 gives a degenerate process")
        if mean <= 1.0:
            raise ConfigError(f"offspring mean m = {mean:.6g} is not > 1 (supercritical required)")

    positive = [k for k in nonzero if k >= 1]
    k_star = min(positive) if positive else None
    p01 = nonzero.get(0, 0.0) + nonzero.get(1, 0.0)
    regime = Regime.BOETTCHER if p01 == 0.0 else Regime.SCHROEDER

    q = _fixed_point(probs)
    if regime is Regime.BOETTCHER:
        rho = math.inf
    else:
        slope = pgf_derivative_array(probs, q)
        rho = -math.log(slope) if slope > 0 else math.inf

    law = OffspringLaw(
        probs=probs,
        mean_m=mean,
        extinction_q=q,
        k_star=k_star,
        regime=regime,
        rho=rho,
        supercritical=mean > 1.0,
        _pmf=nonzero,
    )
    probs.setflags(write=False)
    return law


def _horner(probs: np.ndarray, s):
    acc = np.zeros_like(np.asarray(s, dtype=float)) + probs[-1]
    for c in probs[-2::-1]:
        acc = acc * s + c
    return acc


def pgf_derivative_array(probs: np.ndarray, s: float) -> float:
    ks = np.arange(1, probs.size)
    if ks.size == 0:
        return 0.0
    return float(np.sum(ks * probs[1:] * np.power(s, ks - 1.0)))


def _fixed_point(probs: np.ndarray) -> float:
    s = 0.0
    for _ in range(FIXED_POINT_MAX_ITER):
        nxt = float(_horner(probs, s))
        if abs(nxt - s) <= FIXED_POINT_TOL:
            return nxt
        s = nxt
    return s


def _check_unit(s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if np.any(~(arr >= 0.0)) or np.any(arr > 1.0):
        raise DomainError("pgf argument must lie in [0, 1]")
    return arr


def pgf_eval(law: OffspringLaw, s):
    """f(s) = sum_k p(k) s^k for s in [0, 1] (scalar or array)."""
    arr = _check_unit(s)
    out = _horner(law.probs, arr)
    return float(out) if out.ndim == 0 else out


def pgf_derivative(law: OffspringLaw, s: float) -> float:
    _check_unit(s)
    return pgf_derivative_array(law.probs, float(s))


def pgf_iterate(law: OffspringLaw, s, n: int):
    """n-fold composition f(f(...f(s))) applied elementwise."""
    if n < 0:
        raise DomainError("composition depth must be non-negative")
    arr = _check_unit(s)
    for _ in range(n):
        arr = _horner(law.probs, arr)
    return float(arr) if np.ndim(arr) == 0 else arr


def complementary_pgf_iterate(law: OffspringLaw, u, n: int):
    """Return 1 - f^{(n)}(1 - u) without cancellation for small u.

    Iterates u -> sum_k p(k) (1 - (1 - u)^k), using expm1/log1p so tiny
    exceedance probabilities keep full relative precision.
    """
    if n < 0:
        raise DomainError("composition depth must be non-negative")
    arr = _check_unit(u)
    ks = law.support[law.support > 0]
    ps = law.probs[ks]
    for _ in range(n):
        with np.errstate(divide="ignore"):
            log_keep = np.log1p(-arr)
        terms = -np.expm1(np.multiply.outer(log_keep, ks.astype(float)))
        arr = terms @ ps
    return float(arr) if np.ndim(arr) == 0 else arr


def extinction_prob(law: OffspringLaw) -> float:
    """Smallest fixed point of the pgf, by monotone iteration from 0."""
    return _fixed_point(law.probs)


@dataclass(frozen=True, eq=False)
class ZDistribution:
    """Exact law of Z_n on 0..cap with the mass above cap kept separately."""

    generation_n: int
    probs: np.ndarray
    tail_mass: float
    truncated: bool

    @property
    def cap(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))


def _series_compose(probs: np.ndarray, inner: np.ndarray, cap: int) -> np.ndarray:
    """Coefficients 0..cap of f(g(s)) where g has coefficients ``inner``.

    Truncating g^k at degree cap is exact for all coefficients up to cap.
    """
    out = np.zeros(cap + 1)
    power = np.zeros(cap + 1)
    power[0] = 1.0
    for k in range(probs.size):
        if probs[k] > 0:
            out += probs[k] * power
        if k + 1 < probs.size:
            power = np.convolve(power, inner)[: cap + 1]
    return out


def exact_zn_distribution(law: OffspringLaw, n: int, cap: int) -> ZDistribution:
    """Exact P(Z_n = k) for k = 0..cap.

    Uses the first-generation decomposition Z_n = sum of Z_1 iid copies of
    Z_{n-1}, i.e. the truncated power series of f(f_{n-1}(s)). Every
    entry up to ``cap`` is exact even when mass has left the window;
    ``truncated`` records that some generation <= n had mass above cap.
    """
    if n < 0:
        raise DomainError("generation n must be non-negative")
    if cap < law.max_offspring:
        raise DomainError(f"cap {cap} cannot hold generation-1 support (max {law.max_offspring})")
    series = np.zeros(cap + 1)
    series[1] = 1.0
    for _ in range(n):
        series = _series_compose(law.probs, series, cap)
    # the largest population reachable by generation j is max_offspring**j
    top = law.max_offspring
    truncated = n > 0 and top > 1 and n * math.log(top) > math.log(cap) + 1e-12
    tail = max(0.0, 1.0 - math.fsum(series)) if truncated else 0.0
    return ZDistribution(generation_n=n, probs=series, tail_mass=tail, truncated=truncated)


def reachable_values(law: OffspringLaw, n: int, cap: int) -> set[int]:
    """Values l <= cap with P(Z_j = l) > 0 for some 1 <= j <= n.

    Supports are propagated as 0/1 indicator series so that positive but
    underflowing probabilities are never mistaken for zero.
    """
    if n < 1:
        raise DomainError("reachable_values needs n >= 1")
    if cap < law.max_offspring:
        raise DomainError(f"cap {cap} cannot hold generation-1 support (max {law.max_offspring})")
    indicator = (law.probs > 0).astype(float)
    series = np.zeros(cap + 1)
    series[1] = 1.0
    found: set[int] = set()
    for _ in range(n):
        series = (_series_compose(indicator, series, cap) > 0).astype(float)
        found.update(int(k) for k in np.flatnonzero(series))
    return found


def gw_rate_IGW(law: OffspringLaw, x: float) -> float:
    """Lower-deviation rate rho (1 - x / log m) of Z_n <= e^{xn}, Schroeder case."""
    if law.regime is Regime.BOETTCHER:
        raise RegimeError("I^GW is only finite in the Schroeder regime")
    log_m = math.log(law.mean_m)
    if not 0.0 <= x <= log_m:
        raise DomainError(f"x = {x} outside [0, log m] = [0, {log_m:.6g}]")
    return law.rho * (1.0 - x / log_m)


def _bn_holds(m: float, k_star: int, n: int, j: int, target: int) -> bool:
    lhs = j * math.log(m) + (n - j) * math.log(k_star)
    rhs = math.log(target)
    if abs(lhs - rhs) > 1e-9 * max(1.0, abs(rhs)):
        return lhs >= rhs
    exact = Fraction(m) ** j * Fraction(k_star) ** (n - j)
    return exact >= target


def boettcher_bn(law: OffspringLaw, n: int, k_n: int) -> int:
    """b_n = min{ j : m^j (k*)^(n-j) >= 2 k_n } for the Boettcher lower deviations."""
    if law.regime is not Regime.BOETTCHER:
        raise RegimeError("b_n is defined for the Boettcher regime")
    if n < 0 or k_n < 1:
        raise DomainError("need n >= 0 and k_n >= 1")
    k_star = law.k_star
    if math.log(k_n) < n * math.log(k_star) - 1e-12:
        warnings.warn(f"k_n = {k_n} is below (k*)^n; the b_n asymptotics assume k_n >= (k*)^n")
    target = 2 * k_n
    for j in range(n + 1):
        if _bn_holds(law.mean_m, k_star, n, j, target):
            return j
    raise DomainError(f"no j <= {n} with m^j (k*)^(n-j) >= 2 k_n; k_n too large")


def prob_minimal_population(law: OffspringLaw, n: int) -> float:
    """P(Z_n = (k*)^n) in the Boettcher case: every particle has k* children."""
    if law.regime is not Regime.BOETTCHER:
        raise RegimeError("minimal growth path is a Boettcher-case quantity")
    k = law.k_star
    exponent = (k**n - 1) // (k - 1)
    return math.exp(exponent * math.log(law.probs[k]))
