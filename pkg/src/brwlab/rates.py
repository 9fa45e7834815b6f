"""Rate functions for the rightmost particle of the branching random walk.

All functions are scalar and pure; :func:`rate_curve` maps them over a
grid. Infinite rates are returned as ``math.inf``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DomainError, RegimeError
from .gw import OffspringLaw, Regime, gw_rate_IGW
from .steps import StepLaw

GRID_POINTS = 1024
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ModelParams:
    offspring: OffspringLaw
    step: StepLaw

    def __post_init__(self):
        if self.offspring.mean_m < 1.0:
            raise ConfigError("rate functions need m >= 1")
        if not isinstance(self.step, StepLaw):
            raise ConfigError("rate functions need a stretched-exponential StepLaw")

    @property
    def log_m(self) -> float:
        return math.log(self.offspring.mean_m)

    @property
    def alpha(self) -> float:
        """Almost-sure limit of M_n / n^(1/r): (log m / lambda+)^(1/r)."""
        return (self.log_m / self.step.lambda_plus) ** (1.0 / self.step.r)

    @property
    def rho(self) -> float:
        return self.offspring.rho

    @property
    def k_star(self) -> int:
        return self.offspring.k_star

    @property
    def boettcher(self) -> bool:
        return self.offspring.regime is Regime.BOETTCHER


def rate_I(step: StepLaw, x: float) -> float:
    """Rate of S_n / n^(1/r): lambda+ x^r above 0, lambda- |x|^r below."""
    if x >= 0:
        return step.lambda_plus * x**step.r
    return step.lambda_minus * (-x) ** step.r


def _below_alpha(params: ModelParams, x: float) -> float:
    alpha = params.alpha
    if not x < alpha:
        raise DomainError(f"x = {x!r} must be below alpha = {alpha!r}")
    return alpha


def _deficit(params: ModelParams, x: float) -> float:
    """1 - (x / alpha)^r for x >= 0, written as 1 - lambda+ x^r / log m.

    Every rate that contains this factor goes through here, so rates that
    agree mathematically also agree in floating point.
    """
    return 1.0 - params.step.lambda_plus * x**params.step.r / params.log_m


def gamma_of_x(params: ModelParams, x: float) -> float:
    """Upper end of the time fraction t in the variational form of H."""
    _below_alpha(params, x)
    if x <= 0:
        return 1.0
    return _deficit(params, x)


def H_closed(params: ModelParams, x: float) -> float:
    alpha = _below_alpha(params, x)
    r, lm = params.step.r, params.step.lambda_minus
    if params.boettcher:
        return params.k_star * lm * (alpha - x) ** r
    rho = params.rho
    if x <= 0:
        return min(rho + lm * (-x) ** r, lm * (alpha - x) ** r)
    return min(lm * alpha**r, rho) * _deficit(params, x)


def _objective(params: ModelParams, x: float) -> Callable[[float], float]:
    alpha, r = params.alpha, params.step.r
    rho, lm = params.rho, params.step.lambda_minus
    inv_r = 1.0 / r

    def g(t):
        gap = np.maximum((1.0 - t) ** inv_r * alpha - x, 0.0)
        return t * rho + lm * gap**r

    return g


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float):
    """Minimize a scalar function on [lo, hi] until the bracket is narrower than tol."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    t = 0.5 * (a + b)
    return t, f(t)


class VariationalResult(NamedTuple):
    value: float
    argmin_t: float


def H_variational(params: ModelParams, x: float, tol: float = 1e-10) -> VariationalResult:
    """inf over t in [0, gamma(x)] of t rho + lambda- ((1 - t)^(1/r) alpha - x)^r.

    A dense grid locates the best cell; golden-section search then refines
    over that cell and its neighbours. Endpoints are always candidates,
    since the objective is convex in t for x < 0 and concave for x > 0.
    In the Boettcher regime rho is infinite and the closed form is returned.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if params.boettcher:
        return VariationalResult(H_closed(params, x), math.nan)
    gamma = gamma_of_x(params, x)
    g = _objective(params, x)
    grid = np.linspace(0.0, gamma, GRID_POINTS)
    values = g(grid)
    i = int(np.argmin(values))
    best_t, best = float(grid[i]), float(values[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
    if hi > lo:
        t, v = golden_section(lambda s: float(g(s)), float(lo), float(hi), tol)
        if v < best:
            best_t, best = t, v
    for t_end in (0.0, gamma):
        v = float(g(t_end))
        if v < best:
            best_t, best = t_end, v
    return VariationalResult(best, best_t)


def H(params: ModelParams, x: float, variational: bool = False) -> float:
    if variational:
        return H_variational(params, x).value
    return H_closed(params, x)


def _upper_branch(params: ModelParams, x: float) -> float:
    if x == params.alpha:
        return 0.0
    return params.step.lambda_plus * x**params.step.r - params.log_m


def rate_IBRW(params: ModelParams, x: float, variational: bool = False) -> float:
    """LDP rate of M_n / n^(1/r) under survival conditioning.

    Uses the closed form of H below alpha unless ``variational`` is set.
    """
    if x >= params.alpha:
        return _upper_branch(params, x)
    return H(params, x, variational)


def rate_Iind(params: ModelParams, x: float) -> float:
    """LDP rate for the maximum of Z_n independent walks."""
    alpha = params.alpha
    if x >= alpha:
        return _upper_branch(params, x)
    if params.boettcher:
        return math.inf
    step, rho = params.step, params.rho
    if x >= 0:
        return rho * _deficit(params, x)
    return params.k_star * step.lambda_minus * (-x) ** step.r + rho


class ScalingPrediction(NamedTuple):
    scale: str
    predicted: float


def boettcher_ind_scaling(params: ModelParams, x: float, n: int) -> ScalingPrediction:
    """Leading-order asymptotics for independent walks in the Boettcher case.

    ``scale`` names the transformed probability that ``predicted`` refers to:
    ``log_p`` for log P(max >= x n^(1/r)) when x >= alpha, ``log_abs_log_p``
    for log|log P(max <= x n^(1/r))| when 0 <= x < alpha, and
    ``log_p_lower`` for log P(max <= x n^(1/r)) when x < 0.
    """
    if not params.boettcher:
        raise RegimeError("Boettcher scaling requested for a Schroeder law")
    step, k = params.step, params.k_star
    if x >= params.alpha:
        return ScalingPrediction("log_p", -_upper_branch(params, x) * n)
    if x >= 0:
        # Z_n >= (k*)^n forces |log P| to grow like (k*)^(n (1 - I(x)/log m)): positive exponent
        exponent = n * math.log(k) * (1.0 - step.lambda_plus * x**step.r / params.log_m)
        return ScalingPrediction("log_abs_log_p", exponent)
    return ScalingPrediction("log_p_lower", -n * float(k) ** n * step.lambda_minus * (-x) ** step.r)


class RateKind(str, enum.Enum):
    I = "I"
    IGW = "IGW"
    H = "H"
    IBRW = "IBRW"
    IIND = "IIND"
    BOETTCHER_SCALING = "BOETTCHER_SCALING"


@dataclass(frozen=True, eq=False)
class RateCurve:
    x_grid: np.ndarray
    values: np.ndarray
    kind: RateKind

    def rows(self):
        for x, v in zip(self.x_grid, self.values):
            yield format_number(float(x)), format_number(float(v)), self.kind.value

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "value", "kind"])
        writer.writerows(self.rows())
        return buf.getvalue()


def format_number(v: float) -> str:
    """Shortest round-trip text for a float; infinities as ``inf``/``-inf``."""
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == 0.0:
        return "0"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def rate_curve(params: ModelParams, kind, x_grid: Sequence[float], n: int | None = None) -> RateCurve:
    """Evaluate one rate kind on a sorted grid; points outside its domain give nan."""
    try:
        kind = RateKind(kind)
    except ValueError:
        raise ConfigError(f"unknown rate kind {kind!r}") from None
    xs = np.asarray(x_grid, dtype=float)
    if xs.ndim != 1:
        raise ConfigError("x_grid must be one-dimensional")
    if np.any(np.diff(xs) < 0):
        raise ConfigError("x_grid must be sorted ascending")
    if kind is RateKind.I:
        fn = lambda x: rate_I(params.step, x)  # noqa: E731
    elif kind is RateKind.IGW:
        fn = lambda x: gw_rate_IGW(params.offspring, x)  # noqa: E731
    elif kind is RateKind.H:
        fn = lambda x: H_closed(params, x)  # noqa: E731
    elif kind is RateKind.IBRW:
        fn = lambda x: rate_IBRW(params, x)  # noqa: E731
    elif kind is RateKind.IIND:
        fn = lambda x: rate_Iind(params, x)  # noqa: E731
    else:
        if n is None:
            raise ConfigError("BOETTCHER_SCALING needs the horizon n")
        fn = lambda x: boettcher_ind_scaling(params, x, n).predicted  # noqa: E731
    values = np.array([_defined(fn, float(x)) for x in xs], dtype=float)
    return RateCurve(xs, values, kind)


def _defined(fn: Callable[[float], float], x: float) -> float:
    """Value of fn at x, or nan where x lies outside its domain (e.g. H at x >= alpha)."""
    try:
        return fn(x)
    except DomainError:
        return math.nan
