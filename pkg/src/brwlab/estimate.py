"""Tail-probability estimates, empirical rates and their analytic counterparts."""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import rng
from .errors import ConfigError, DomainError, ResourceError
from .gw import OffspringLaw, ZDistribution, exact_zn_distribution
from .oracle import ind_max_upper_tail, walk_upper_tail
from .rates import ModelParams, format_number, golden_section, rate_IBRW, rate_Iind
from .rng import Stream
from .simulate import SimConfig, run_conditioned, run_range
from .steps import LatticeStepLaw, StepLaw, tail_upper

MIN_REPLICAS = 100
JUMP_CHUNK = 1 << 18
ZN_CAP = 1 << 12


def clopper_pearson(successes: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    """Exact binomial interval from beta quantiles; endpoints are 0 and 1 at the extremes."""
    if trials <= 0 or not 0 <= successes <= trials:
        raise DomainError("need 0 <= successes <= trials and trials > 0")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    a = 1.0 - level
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(a / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(stats.beta.ppf(1 - a / 2, successes + 1, trials - successes))
    return lo, hi


def _rate(p: float, n: int) -> float:
    if n <= 0 or not p > 0:
        return math.nan
    return -math.log(p) / n


@dataclass(frozen=True)
class TailEstimate:
    successes: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float
    level: float
    empirical_rate: float
    horizon_n: int
    analytic_rate: float = math.nan

    @classmethod
    def from_counts(cls, successes: int, trials: int, n: int, level: float = 0.99, analytic_rate: float = math.nan):
        lo, hi = clopper_pearson(successes, trials, level)
        p = successes / trials
        return cls(successes, trials, p, lo, hi, level, _rate(p, n), n, analytic_rate)

    @property
    def rate_bracket(self) -> tuple[float, float]:
        """Empirical rates implied by the interval endpoints (low rate, high rate)."""
        return _rate(self.ci_high, self.horizon_n), _rate(self.ci_low, self.horizon_n)


class Side(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class Event:
    """{M_n / scale >= x} (upper) or {M_n / scale <= x} (lower)."""

    side: Side
    threshold_x: float

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))

    def hits(self, scaled: np.ndarray) -> np.ndarray:
        if self.side is Side.UPPER:
            return scaled >= self.threshold_x
        return scaled <= self.threshold_x


def event_rate(params: ModelParams, event: Event, op: str = "brw") -> float:
    """Analytic rate of the event: the rate function at x if the event is atypical, else 0."""
    x, alpha = event.threshold_x, params.alpha
    atypical = x > alpha if event.side is Side.UPPER else x < alpha
    if not atypical:
        return 0.0
    return rate_IBRW(params, x) if op == "brw" else rate_Iind(params, x)


def _analytic_for(cfg: SimConfig, event: Event, op: str) -> float:
    if not isinstance(cfg.step, StepLaw) or cfg.offspring.mean_m < 1.0:
        return math.nan
    try:
        return event_rate(cfg.params, event, op)
    except DomainError:
        return math.nan


def estimate_event(cfg: SimConfig, event: Event, replicas: int, op: str = "brw", workers: int = 1, level: float = 0.99) -> TailEstimate:
    """Estimate P*(M_n / n^(1/r) in event) (lattice laws: scale 1) by direct simulation."""
    if replicas < MIN_REPLICAS:
        raise ConfigError(f"replicas must be at least {MIN_REPLICAS}, got {replicas}")
    if cfg.condition_on_survival:
        runs = run_conditioned(cfg, op, replicas, workers)
        batch, truncated = runs.batch, runs.truncated
    else:
        batch = run_range(cfg, op, 0, replicas, workers)
        truncated = int(batch.truncated.sum())
    if truncated:
        raise ResourceError(f"{truncated} runs exceeded population_cap={cfg.population_cap}; raise the cap")
    scale = cfg.scale if cfg.horizon_n > 0 else 1.0
    hits = int(np.count_nonzero(event.hits(batch.max_position / scale)))
    return TailEstimate.from_counts(hits, len(batch), cfg.horizon_n, level, _analytic_for(cfg, event, op))


def semianalytic_ind_tail(zdist: ZDistribution, sn_cdf_at_y: float, conditional: bool = False) -> float:
    """P(max of Z_n independent walks > y) = sum_k P(Z_n = k) (1 - F(y)^k).

    ``sn_cdf_at_y`` is P(S_n <= y). With ``conditional`` the result is
    divided by P(Z_n > 0).
    """
    if zdist.truncated or zdist.tail_mass > 0:
        raise DomainError("the population law must be complete (no mass above cap)")
    c = float(sn_cdf_at_y)
    if not 0.0 <= c <= 1.0:
        raise DomainError("sn_cdf_at_y must be a probability")
    k = np.arange(zdist.probs.size, dtype=float)
    with np.errstate(divide="ignore"):
        miss = -np.expm1(k * math.log(c)) if c > 0 else (k > 0).astype(float)
    value = float(np.dot(zdist.probs, miss))
    if conditional:
        alive = 1.0 - zdist.probs[0]
        if not alive > 0:
            raise DomainError("population is extinct with probability 1")
        value /= alive
    return value


@dataclass(frozen=True)
class SumAsMax:
    ratio: float
    ci_low: float
    ci_high: float
    successes: int
    trials: int
    reference: float
    warnings: tuple = field(default_factory=tuple)


def _exceed_counts(args):
    step, n, x_n, seed, start, stop = args
    ids = np.arange(start, stop, dtype=np.int64)
    total = np.zeros(ids.size)
    for k in range(n):
        total += step.quantile(rng.uniforms(seed, Stream.JUMP, ids, k))
    return int(np.count_nonzero(total > x_n))


def sumasmax_ratio(step: StepLaw, n: int, x_n: float, replicas: int, seed: int = 0, workers: int = 1, level: float = 0.99) -> SumAsMax:
    """Monte Carlo P(S_n > x_n) divided by the exact n P(X >= x_n)."""
    if not x_n > 0:
        raise DomainError("x_n must be positive")
    if n < 1 or replicas < 1:
        raise DomainError("n and replicas must be positive")
    notes = []
    regime = 10.0 * n ** (1.0 / (2.0 - 2.0 * step.r))
    if x_n < regime:
        notes.append(f"x_n={x_n:g} is below 10 n^(1/(2-2r)) = {regime:g}; asymptotic regime not reached")
    tasks = [(step, n, x_n, seed, a, min(a + JUMP_CHUNK, replicas)) for a in range(0, replicas, JUMP_CHUNK)]
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(_exceed_counts, tasks))
    else:
        hits = sum(_exceed_counts(t) for t in tasks)
    reference = n * tail_upper(step, x_n)
    lo, hi = clopper_pearson(hits, replicas, level)
    ratio = hits / replicas / reference if hits else math.nan
    if hits and not 0.5 <= ratio <= 2.0:
        notes.append(f"ratio {ratio:.3g} outside [0.5, 2]")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return SumAsMax(ratio, lo / reference, hi / reference, hits, replicas, reference, tuple(notes))


def lattice_cramer_rate(lattice: LatticeStepLaw, x: float, grid_points: int = 200_001, s_max: float = 60.0) -> float:
    """sup_s (s x - log E exp(s X)) by dense search over s plus golden refinement.

    The objective is concave in s, so the grid cell holding the best value
    brackets the maximizer unless it sits at the edge of [-s_max, s_max].
    """
    h, idx = lattice.h, lattice.indices
    keep = lattice.probs > 0
    pos, p = h * idx[keep].astype(float), lattice.probs[keep]
    if x > pos.max() or x < pos.min():
        return math.inf
    if x == pos.max():
        return -math.log(p[-1])
    if x == pos.min():
        return -math.log(p[0])
    log_p = np.log(p)

    def dual(s):
        s = np.asarray(s, dtype=float)
        expo = np.multiply.outer(s, pos) + log_p
        top = expo.max(axis=-1)
        return s * x - (top + np.log(np.exp(expo - top[..., None]).sum(axis=-1)))

    grid = np.linspace(-s_max, s_max, grid_points)
    vals = dual(grid)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    _, neg = golden_section(lambda s: -float(dual(s)), float(lo), float(hi), 1e-12)
    return max(float(vals[i]), -neg)


class TrendKind(str, enum.Enum):
    IND_UPPER = "IND_UPPER"
    GW_LOWER = "GW_LOWER"
    MC = "MC"


@dataclass(frozen=True)
class TrendRow:
    n: int
    x: float
    kind: str
    p_hat: float
    ci_low: float
    ci_high: float
    empirical_rate: float
    analytic_rate: float
    method: str = ""

    @property
    def gap(self) -> float:
        return abs(self.empirical_rate - self.analytic_rate)

    @property
    def undefined(self) -> bool:
        return math.isnan(self.empirical_rate)


TREND_HEADER = ["n", "x", "kind", "p_hat", "ci_low", "ci_high", "empirical_rate", "analytic_rate"]


@dataclass(frozen=True)
class TrendTable:
    rows: tuple

    @property
    def gaps(self) -> list[float]:
        return [r.gap for r in self.rows if not r.undefined]

    @property
    def gaps_decreasing(self) -> bool:
        g = self.gaps
        return len(g) >= 2 and all(b < a for a, b in zip(g, g[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TREND_HEADER)
        for r in self.rows:
            writer.writerow(
                [r.n, format_number(r.x), r.kind]
                + [format_number(float(v)) for v in (r.p_hat, r.ci_low, r.ci_high, r.empirical_rate, r.analytic_rate)]
            )
        return buf.getvalue()


def _check_n_list(n_list: Sequence[int]) -> list[int]:
    ns = [int(n) for n in n_list]
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 0:
        raise ConfigError("n_list must be non-empty, non-negative and strictly ascending")
    return ns


def ind_upper_tail(lattice: LatticeStepLaw, offspring: OffspringLaw, n: int, k: int) -> tuple[float, str]:
    """P(max of Z_n independent walks >= h k), with the method used.

    When Z_n fits in a small window its exact law is mixed directly;
    otherwise the same mixture is evaluated through the pgf, which is the
    generating function of that law.
    """
    if n == 0:
        return (1.0 if k <= 0 else 0.0), "point"
    tail = walk_upper_tail(lattice, n, k)
    if offspring.max_offspring ** n <= ZN_CAP:
        zdist = exact_zn_distribution(offspring, n, max(ZN_CAP, offspring.max_offspring))
        if not zdist.truncated:
            return semianalytic_ind_tail(zdist, 1.0 - tail), "zn-law"
    return ind_max_upper_tail(lattice, offspring, n, k), "pgf"


def trend_ind_upper(lattice: LatticeStepLaw, offspring: OffspringLaw, x: float, n_list: Sequence[int]) -> TrendTable:
    """-(1/n) log P(M~_n >= x n) against the lattice analogue Lambda*(x) - log m."""
    analytic = lattice_cramer_rate(lattice, x) - math.log(offspring.mean_m)
    rows = []
    for n in _check_n_list(n_list):
        k = math.ceil(x * n / lattice.h - 1e-9)
        p, method = ind_upper_tail(lattice, offspring, n, k)
        rows.append(TrendRow(n, x, TrendKind.IND_UPPER.value, p, p, p, _rate(p, n), analytic, method))
    return TrendTable(tuple(rows))


def trend_gw_lower(offspring: OffspringLaw, n_list: Sequence[int]) -> TrendTable:
    """Successive ratios P(Z_(n+1) = k*) / P(Z_n = k*), reported as -log ratio against rho."""
    k = offspring.k_star
    ns = _check_n_list(n_list)
    cap = max(offspring.max_offspring, k)
    rows = []
    for n in ns:
        if n == 0:
            rows.append(TrendRow(0, float(k), TrendKind.GW_LOWER.value, *(math.nan,) * 4, offspring.rho, "undefined"))
            continue
        now = exact_zn_distribution(offspring, n, cap).probs[k]
        nxt = exact_zn_distribution(offspring, n + 1, cap).probs[k]
        ratio = nxt / now if now > 0 else math.nan
        emp = -math.log(ratio) if ratio > 0 else math.nan
        rows.append(TrendRow(n, float(k), TrendKind.GW_LOWER.value, ratio, ratio, ratio, emp, offspring.rho, "exact"))
    return TrendTable(tuple(rows))


def trend_mc(base: SimConfig, event: Event, n_list: Sequence[int], replicas: int, op: str = "brw", workers: int = 1, level: float = 0.99) -> TrendTable:
    """Simulated empirical rates for one event across horizons."""
    rows = []
    for n in _check_n_list(n_list):
        if n == 0:
            rows.append(TrendRow(0, event.threshold_x, TrendKind.MC.value, *(math.nan,) * 5, "undefined"))
            continue
        cfg = SimConfig(base.offspring, base.step, n, base.population_cap, base.seed, base.condition_on_survival)
        est = estimate_event(cfg, event, replicas, op, workers, level)
        rows.append(
            TrendRow(n, event.threshold_x, TrendKind.MC.value, est.p_hat, est.ci_low, est.ci_high, est.empirical_rate, est.analytic_rate, "mc")
        )
    return TrendTable(tuple(rows))


def rate_trend(kind, n_list: Sequence[int], **kwargs) -> TrendTable:
    """Dispatch to the trend of the given kind; keyword arguments follow that trend's signature."""
    try:
        kind = TrendKind(kind)
    except ValueError:
        raise ConfigError(f"unknown trend kind {kind!r}") from None
    if kind is TrendKind.IND_UPPER:
        return trend_ind_upper(kwargs["lattice"], kwargs["offspring"], kwargs["x"], n_list)
    if kind is TrendKind.GW_LOWER:
        return trend_gw_lower(kwargs["offspring"], n_list)
    return trend_mc(kwargs["cfg"], kwargs["event"], n_list, kwargs["replicas"], kwargs.get("op", "brw"), kwargs.get("workers", 1))

