"""Centered two-sided stretched-exponential displacements.

P(X >= x) = a+ exp(-lambda+ x^r) and P(X <= -x) = a- exp(-lambda- x^r) for
x >= 0, with constant prefactors chosen so that the CDF is continuous at 0
and E[X] = 0. A finite lattice law stands in for X in the exact oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError

_LATTICE_TOL = 1e-12


@dataclass(frozen=True)
class StepLaw:
    r: float
    lambda_plus: float
    lambda_minus: float
    a_plus: float
    a_minus: float

    def quantile(self, u):
        return quantile(self, u)

    def to_json(self) -> dict:
        return {"r": self.r, "lambda_plus": self.lambda_plus, "lambda_minus": self.lambda_minus}


def make_centered(r: float, lambda_plus: float, lambda_minus: float) -> StepLaw:
    """Build the mean-zero law with tail rates lambda+/lambda- and shape r.

    With constant prefactors, E[X] = Gamma(1 + 1/r) (a+ lambda+^(-1/r) -
    a- lambda-^(-1/r)), so centering fixes a+ : a- = lambda+^(1/r) : lambda-^(1/r).
    """
    r, lp, lm = float(r), float(lambda_plus), float(lambda_minus)
    if not 0.0 < r < 1.0:
        raise ConfigError(
            f"r = {r} outside (0, 1); r >= 1 satisfies Cramer's condition and is not supported"
        )
    if not (lp > 0 and lm > 0 and math.isfinite(lp) and math.isfinite(lm)):
        raise ConfigError("lambda_plus and lambda_minus must be positive and finite")
    # scale both weights by the larger one to avoid overflow for small r
    log_wp, log_wm = math.log(lp) / r, math.log(lm) / r
    top = max(log_wp, log_wm)
    wp, wm = math.exp(log_wp - top), math.exp(log_wm - top)
    a_plus = wp / (wp + wm)
    # each weight from its own ratio, so a tiny a_minus keeps full relative precision
    return StepLaw(r=r, lambda_plus=lp, lambda_minus=lm, a_plus=a_plus, a_minus=wm / (wp + wm))


def step_law_from_json(cfg: Mapping) -> StepLaw:
    extra = set(cfg) - {"r", "lambda_plus", "lambda_minus"}
    if extra:
        raise ConfigError(f"unknown step-law keys: {sorted(extra)}")
    try:
        return make_centered(cfg["r"], cfg["lambda_plus"], cfg["lambda_minus"])
    except KeyError as exc:
        raise ConfigError(f"step law is missing {exc.args[0]!r}") from None


def _nonneg(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0)):
        raise DomainError("tail functions take x >= 0")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def tail_upper(law: StepLaw, x):
    """P(X >= x) = a+ exp(-lambda+ x^r), x >= 0."""
    arr = _nonneg(x)
    return _out(law.a_plus * np.exp(-law.lambda_plus * arr**law.r))


def tail_lower(law: StepLaw, x):
    """P(X <= -x) = a- exp(-lambda- x^r), x >= 0."""
    arr = _nonneg(x)
    return _out(law.a_minus * np.exp(-law.lambda_minus * arr**law.r))


def cdf(law: StepLaw, x):
    arr = np.asarray(x, dtype=float)
    neg = law.a_minus * np.exp(-law.lambda_minus * np.abs(np.minimum(arr, 0.0)) ** law.r)
    pos = 1.0 - law.a_plus * np.exp(-law.lambda_plus * np.maximum(arr, 0.0) ** law.r)
    return _out(np.where(arr <= 0.0, neg, pos))


def quantile(law: StepLaw, u):
    """Exact inverse of :func:`cdf` on (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("quantile needs u in the open interval (0, 1)")
    lower = arr <= law.a_minus
    with np.errstate(divide="ignore", invalid="ignore"):
        # lower branch: u = a- exp(-lambda- |x|^r)
        depth_lo = np.log(law.a_minus / np.where(lower, arr, law.a_minus)) / law.lambda_minus
        # upper branch: 1 - u = a+ exp(-lambda+ x^r)
        depth_hi = np.log(law.a_plus / np.where(lower, law.a_plus, 1.0 - arr)) / law.lambda_plus
    inv_r = 1.0 / law.r
    out = np.where(
        lower,
        -np.maximum(depth_lo, 0.0) ** inv_r,
        np.maximum(depth_hi, 0.0) ** inv_r,
    )
    return _out(out)


def open_uniforms(rng: np.random.Generator, size=None):
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-53


def sample(law, rng: np.random.Generator, size=None):
    """Inverse-CDF samples of a StepLaw or LatticeStepLaw."""
    return law.quantile(open_uniforms(rng, size))


def mean_by_quadrature(law: StepLaw) -> float:
    """E[X] from the tails by adaptive quadrature, independent of the centering rule.

    E[X] = int_0^inf P(X > x) dx - int_0^inf P(X < -x) dx, each integral taken
    in the variable t = x^r where the integrand is smooth.
    """
    inv_r = 1.0 / law.r

    def side(a, lam):
        value, _ = integrate.quad(
            lambda t: a * math.exp(-lam * t) * inv_r * t ** (inv_r - 1.0),
            0.0,
            np.inf,
            epsabs=1e-13,
            epsrel=1e-12,
            limit=500,
        )
        return value

    return side(law.a_plus, law.lambda_plus) - side(law.a_minus, law.lambda_minus)


@dataclass(frozen=True, eq=False)
class LatticeStepLaw:
    """Finite law on the lattice h * Z used as an exactly computable surrogate."""

    h: float
    min_index: int
    probs: np.ndarray
    mean: float
    _pmf: dict = field(default_factory=dict, repr=False)

    @property
    def pmf(self) -> dict[int, float]:
        return dict(self._pmf)

    @property
    def max_index(self) -> int:
        return self.min_index + self.probs.size - 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.min_index, self.max_index + 1)

    def quantile(self, u):
        """Positions h * k by inverse CDF over the lattice indices."""
        arr = np.asarray(u, dtype=float)
        cum = np.cumsum(self.probs)
        slot = np.minimum(np.searchsorted(cum, arr, side="left"), self.probs.size - 1)
        return _out(self.h * (self.min_index + slot).astype(float))

    def to_json(self) -> dict:
        return {"h": self.h, "pmf": {str(k): v for k, v in self._pmf.items()}}


def make_lattice_surrogate(h: float, pmf: Mapping) -> LatticeStepLaw:
    h = float(h)
    if not (h > 0 and math.isfinite(h)):
        raise ConfigError("lattice spacing h must be positive")
    parsed: dict[int, float] = {}
    for key, value in pmf.items():
        try:
            k = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"lattice index {key!r} is not an integer") from None
        p = float(value)
        if not math.isfinite(p) or p < 0:
            raise ConfigError(f"lattice probability for {k} is invalid: {value!r}")
        parsed[k] = parsed.get(k, 0.0) + p
    parsed = {k: p for k, p in sorted(parsed.items()) if p > 0}
    if not parsed:
        raise ConfigError("lattice pmf is empty")
    total = math.fsum(parsed.values())
    if abs(total - 1.0) > _LATTICE_TOL:
        raise ConfigError(f"lattice probabilities sum to {total!r}, not 1")
    mean = h * math.fsum(k * p for k, p in parsed.items())
    if abs(mean) > _LATTICE_TOL:
        raise ConfigError(f"lattice law has mean {mean!r}; a centered law is required")
    lo, hi = min(parsed), max(parsed)
    probs = np.zeros(hi - lo + 1)
    for k, p in parsed.items():
        probs[k - lo] = p
    probs.setflags(write=False)
    return LatticeStepLaw(h=h, min_index=lo, probs=probs, mean=mean, _pmf=parsed)


def lattice_from_json(cfg: Mapping) -> LatticeStepLaw:
    extra = set(cfg) - {"h", "pmf"}
    if extra:
        raise ConfigError(f"unknown lattice keys: {sorted(extra)}")
    if "pmf" not in cfg:
        raise ConfigError("lattice surrogate is missing 'pmf'")
    return make_lattice_surrogate(cfg.get("h", 1.0), cfg["pmf"])
