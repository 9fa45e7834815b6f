"""Exact CDFs of the maximum on lattice surrogates.

Both maxima are computed over the lattice window [n * min_index, n *
max_index], outside which the CDF is known in closed form: it equals the
extinction mass to the left and 1 to the right.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ResourceError
from .gw import OffspringLaw, complementary_pgf_iterate, pgf_eval, pgf_iterate
from .rates import format_number
from .steps import LatticeStepLaw

MAX_POINTS = 10**7
VIOLATION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LatticeDist:
    """CDF of a lattice-valued maximum on indices min_index .. min_index + len(cdf) - 1."""

    h: float
    min_index: int
    cdf: np.ndarray
    extinct_mass: float
    n: int

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.min_index, self.min_index + self.cdf.size)

    @property
    def x(self) -> np.ndarray:
        return self.h * self.indices.astype(float)

    def at_index(self, k):
        """CDF at lattice index k, extended by extinct_mass below and 1 above the window."""
        k = np.asarray(k, dtype=np.int64)
        j = k - self.min_index
        inside = self.cdf[np.clip(j, 0, self.cdf.size - 1)]
        out = np.where(j < 0, self.extinct_mass, np.where(j >= self.cdf.size, 1.0, inside))
        return float(out) if out.ndim == 0 else out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "cdf"])
        for x, c in zip(self.x, self.cdf):
            writer.writerow([format_number(float(x)), format_number(float(c))])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"h": self.h, "extinct_mass": self.extinct_mass, "n": self.n}


def _window(lattice: LatticeStepLaw, n: int, max_points: int) -> tuple[int, int]:
    if n < 0:
        raise DomainError("n must be non-negative")
    lo, hi = n * lattice.min_index, n * lattice.max_index
    if hi - lo + 1 > max_points:
        raise ResourceError(f"lattice window of {hi - lo + 1} points exceeds the bound {max_points}")
    return lo, hi


def _unit(a: np.ndarray) -> np.ndarray:
    """Clip rounding excursions so pgf arguments stay in [0, 1]."""
    return np.clip(a, 0.0, 1.0)


def brw_max_cdf_exact(lattice: LatticeStepLaw, offspring: OffspringLaw, n: int, max_points: int = MAX_POINTS) -> LatticeDist:
    """CDF of M_n via F_(k+1)(x) = f(sum_s mu(s) F_k(x - s)), F_0 the unit step at 0."""
    lo, hi = _window(lattice, n, max_points)
    idx = np.arange(lo, hi + 1)
    cdf = (idx >= 0).astype(float)
    # a centered law has min_index <= 0 <= max_index, so both pads are non-negative
    left, right = lattice.max_index, -lattice.min_index
    extinct = 0.0
    for _ in range(n):
        # padded covers x - s for every window point x and step index s; the
        # 'valid' part of the convolution is then exactly sum_s mu(s) F(x - s)
        padded = np.concatenate([np.full(left, extinct), cdf, np.ones(right)])
        mixed = np.convolve(padded, lattice.probs, mode="valid")
        cdf = pgf_eval(offspring, _unit(mixed))
        extinct = pgf_eval(offspring, extinct)
    return LatticeDist(lattice.h, lo, np.asarray(cdf, dtype=float), float(extinct), n)


def walk_pmf(lattice: LatticeStepLaw, n: int, max_points: int = MAX_POINTS) -> tuple[int, np.ndarray]:
    """Exact pmf of S_n on indices n * min_index .. n * max_index."""
    lo, _ = _window(lattice, n, max_points)
    pmf = np.ones(1)
    for _ in range(n):
        pmf = np.convolve(pmf, lattice.probs)
    return lo, pmf


def walk_cdf(lattice: LatticeStepLaw, n: int, max_points: int = MAX_POINTS) -> LatticeDist:
    lo, pmf = walk_pmf(lattice, n, max_points)
    return LatticeDist(lattice.h, lo, _unit(np.cumsum(pmf)), 0.0, n)


def walk_upper_tail(lattice: LatticeStepLaw, n: int, k: int) -> float:
    """P(S_n >= h k), summed from the top so tiny tails keep relative precision."""
    lo, pmf = walk_pmf(lattice, n)
    j = k - lo
    if j <= 0:
        return 1.0
    if j >= pmf.size:
        return 0.0
    return float(min(np.sum(pmf[j:][::-1]), 1.0))


def ind_max_cdf_exact(lattice: LatticeStepLaw, offspring: OffspringLaw, n: int, max_points: int = MAX_POINTS) -> LatticeDist:
    """CDF of the maximum of Z_n independent walks: f^(n) applied to the CDF of S_n."""
    walk = walk_cdf(lattice, n, max_points)
    cdf = pgf_iterate(offspring, walk.cdf, n)
    extinct = pgf_iterate(offspring, 0.0, n)
    return LatticeDist(lattice.h, walk.min_index, np.asarray(cdf, dtype=float), float(extinct), n)


def ind_max_upper_tail(lattice: LatticeStepLaw, offspring: OffspringLaw, n: int, k: int) -> float:
    """P(max of Z_n walks >= h k) = 1 - f^(n)(1 - P(S_n >= h k)), without cancellation."""
    return complementary_pgf_iterate(offspring, walk_upper_tail(lattice, n, k), n)


def conditional_cdf(dist: LatticeDist) -> LatticeDist:
    """CDF given survival to generation n: (F - e) / (1 - e)."""
    e = dist.extinct_mass
    if not e < 1.0:
        raise DomainError("population is extinct with probability 1; no conditional law")
    cdf = np.clip((dist.cdf - e) / (1.0 - e), 0.0, 1.0)
    return LatticeDist(dist.h, dist.min_index, cdf, 0.0, dist.n)


class DominationCheck(NamedTuple):
    holds: bool
    max_violation: float


def domination_check_exact(lattice: LatticeStepLaw, offspring: OffspringLaw, n: int) -> DominationCheck:
    """Check P(M_n <= x) >= P(M~_n <= x) at every lattice point of the window."""
    brw = brw_max_cdf_exact(lattice, offspring, n)
    ind = ind_max_cdf_exact(lattice, offspring, n)
    gap = ind.cdf - brw.cdf
    worst = max(float(gap.max(initial=0.0)), ind.extinct_mass - brw.extinct_mass, 0.0)
    return DominationCheck(worst <= VIOLATION_TOL, worst)


def shared_step_check(lattice: LatticeStepLaw, offspring: OffspringLaw, max_children: int = 8) -> DominationCheck:
    """Depth-1 enumeration: one step shared by all children versus one per child.

    For each offspring count k the law of max_i X_i over independent steps
    is enumerated over all k-tuples, and compared with the shared-step law
    (which is just the law of X). The shared version must have the larger
    CDF everywhere.
    """
    support = lattice.indices[lattice.probs > 0]
    probs = lattice.probs[lattice.probs > 0]
    worst = 0.0
    for k in offspring.support:
        k = int(k)
        if k == 0:
            continue
        if k > max_children:
            raise ResourceError(f"enumeration over {k} children exceeds the bound {max_children}")
        indep = {}
        for combo in itertools.product(range(support.size), repeat=k):
            top = int(max(support[list(combo)]))
            indep[top] = indep.get(top, 0.0) + float(np.prod(probs[list(combo)]))
        for x in support:
            p_indep = sum(p for top, p in indep.items() if top <= x)
            p_shared = float(probs[support <= x].sum())
            worst = max(worst, p_indep - p_shared)
    return DominationCheck(worst <= VIOLATION_TOL, worst)
