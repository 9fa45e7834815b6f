"""Monte Carlo engines for the branching random walk and independent walks.

Replicas are simulated in vectorized batches, but every draw is keyed by
(seed, replica index, generation, particle index), so a replica's outcome
is the same whichever batch or worker process computes it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import rng
from .errors import ConfigError, ResourceError, SimulationAbort
from .gw import OffspringLaw, pgf_iterate
from .rates import ModelParams
from .rng import Stream
from .steps import LatticeStepLaw, StepLaw

CHUNK = 8192
CHUNK_PARTICLES = 1 << 21
PROBE_ATTEMPTS = 10**6
MIN_ACCEPTANCE = 1e-6


@dataclass(frozen=True)
class SimConfig:
    offspring: OffspringLaw
    step: StepLaw | LatticeStepLaw
    horizon_n: int
    population_cap: int = 10**6
    seed: int = 0
    condition_on_survival: bool = True

    def __post_init__(self):
        if int(self.horizon_n) != self.horizon_n or self.horizon_n < 0:
            raise ConfigError("horizon_n must be a non-negative integer")
        if int(self.population_cap) != self.population_cap or self.population_cap < 1:
            raise ConfigError("population_cap must be a positive integer")
        try:
            rng.check_seed(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not isinstance(self.step, (StepLaw, LatticeStepLaw)):
            raise ConfigError("step must be a StepLaw or LatticeStepLaw")

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.offspring, self.step)

    @property
    def scale(self) -> float:
        """n^(1/r) for stretched-exponential steps, 1 for lattice surrogates."""
        if isinstance(self.step, StepLaw):
            return float(self.horizon_n) ** (1.0 / self.step.r)
        return 1.0

    def survival_probability(self) -> float:
        """Exact P(Z_n > 0) from the pgf."""
        return 1.0 - pgf_iterate(self.offspring, 0.0, self.horizon_n)

    def to_json(self) -> dict:
        step = self.step.to_json()
        return {
            "offspring": self.offspring.to_json(),
            "step" if isinstance(self.step, StepLaw) else "lattice": step,
            "horizon_n": int(self.horizon_n),
            "population_cap": int(self.population_cap),
            "seed": int(self.seed),
            "condition_on_survival": bool(self.condition_on_survival),
        }


@dataclass(frozen=True)
class BrwRunResult:
    replica: int
    survived_to_n: bool
    max_position: float
    population_path: tuple
    truncated: bool


@dataclass(frozen=True, eq=False)
class BrwBatch:
    """Column-oriented results for a set of replicas.

    Truncated replicas carry ``max_position = nan`` and population entries
    of -1 after the generation at which the cap was exceeded.
    """

    replicas: np.ndarray
    survived: np.ndarray
    max_position: np.ndarray
    population: np.ndarray
    truncated: np.ndarray

    def __len__(self) -> int:
        return int(self.replicas.size)

    def result(self, i: int) -> BrwRunResult:
        return BrwRunResult(
            replica=int(self.replicas[i]),
            survived_to_n=bool(self.survived[i]),
            max_position=float(self.max_position[i]),
            population_path=tuple(int(z) for z in self.population[i]),
            truncated=bool(self.truncated[i]),
        )

    def select(self, mask) -> "BrwBatch":
        return BrwBatch(*(getattr(self, f)[mask] for f in _FIELDS))

    @property
    def final_population(self) -> np.ndarray:
        return self.population[:, -1]

    @classmethod
    def concat(cls, parts: Sequence["BrwBatch"], horizon_n: int) -> "BrwBatch":
        if not parts:
            return empty_batch(horizon_n)
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in _FIELDS))


_FIELDS = ("replicas", "survived", "max_position", "population", "truncated")


def empty_batch(horizon_n: int) -> BrwBatch:
    return BrwBatch(
        np.zeros(0, np.int64),
        np.zeros(0, bool),
        np.zeros(0),
        np.zeros((0, horizon_n + 1), np.int64),
        np.zeros(0, bool),
    )


def _local_index(group: np.ndarray, n_groups: int) -> np.ndarray:
    """Position of each element within its (contiguous) group."""
    counts = np.bincount(group, minlength=n_groups)
    starts = np.cumsum(counts) - counts
    return np.arange(group.size, dtype=np.int64) - starts[group]


def _support(law: OffspringLaw):
    values = law.support.astype(np.int64)
    return values, law.probs[values]


def simulate_brw_batch(cfg: SimConfig, replica_indices) -> BrwBatch:
    """Branching random walk for each listed replica, generation by generation.

    Only the current front of positions is kept. A replica whose population
    exceeds ``population_cap`` is dropped from further evolution and flagged.
    """
    ids = np.asarray(replica_indices, dtype=np.int64)
    n_rep, n = ids.size, cfg.horizon_n
    values, probs = _support(cfg.offspring)
    population = np.zeros((n_rep, n + 1), dtype=np.int64)
    population[:, 0] = 1
    truncated = np.zeros(n_rep, dtype=bool)
    owner = np.arange(n_rep, dtype=np.int64)
    pos = np.zeros(n_rep)
    for g in range(1, n + 1):
        local = _local_index(owner, n_rep)
        u = rng.uniforms(cfg.seed, Stream.OFFSPRING, ids[owner], g, local)
        kids = rng.categorical(u, values, probs)
        z = np.bincount(owner, weights=kids, minlength=n_rep).astype(np.int64)
        z[truncated] = -1
        over = z > cfg.population_cap
        population[:, g] = z
        if over.any():
            truncated |= over
            population[over, g + 1 :] = -1
            kids = np.where(over[owner], 0, kids)
        owner = np.repeat(owner, kids)
        pos = np.repeat(pos, kids)
        local = _local_index(owner, n_rep)
        u = rng.uniforms(cfg.seed, Stream.STEP, ids[owner], g, local)
        pos = pos + cfg.step.quantile(u)
    best = np.full(n_rep, -np.inf)
    np.maximum.at(best, owner, pos)
    best[truncated] = np.nan
    survived = population[:, n] > 0
    return BrwBatch(ids, survived, best, population, truncated)


def population_paths(cfg: SimConfig, replica_indices):
    """Counts-only Galton-Watson paths Z_0..Z_n, one row per replica.

    Z_g given Z_(g-1) is the offspring total of a multinomial split of the
    parents over the offspring support, so no per-particle work is needed.
    Returns (paths, truncated); a path records the first value above the
    cap and holds -1 afterwards.
    """
    ids = np.asarray(replica_indices, dtype=np.int64)
    n_rep, n = ids.size, cfg.horizon_n
    values, probs = _support(cfg.offspring)
    cols = np.arange(max(values.size - 1, 1), dtype=np.int64)
    paths = np.zeros((n_rep, n + 1), dtype=np.int64)
    paths[:, 0] = 1
    truncated = np.zeros(n_rep, dtype=bool)
    z = np.ones(n_rep, dtype=np.int64)
    for g in range(1, n + 1):
        live = np.flatnonzero((z > 0) & ~truncated)
        nxt = np.zeros(n_rep, dtype=np.int64)
        if live.size:
            u = rng.uniforms(cfg.seed, Stream.POPULATION, ids[live][:, None], g, cols[None, :])
            nxt[live] = rng.multinomial_total(u, z[live], values, probs)
        nxt[truncated] = -1
        truncated |= nxt > cfg.population_cap
        paths[:, g] = nxt
        z = nxt
    return paths, truncated


def simulate_ind_batch(cfg: SimConfig, replica_indices) -> BrwBatch:
    """Maximum of Z_n independent n-step walks, Z_n from a counts-only path."""
    ids = np.asarray(replica_indices, dtype=np.int64)
    n_rep, n = ids.size, cfg.horizon_n
    paths, truncated = population_paths(cfg, ids)
    z_final = np.where(truncated, 0, paths[:, n])
    owner = np.repeat(np.arange(n_rep, dtype=np.int64), z_final)
    walk = _local_index(owner, n_rep)
    pos = np.zeros(owner.size)
    for k in range(1, n + 1):
        u = rng.uniforms(cfg.seed, Stream.WALK, ids[owner], walk, k)
        pos += cfg.step.quantile(u)
    best = np.full(n_rep, -np.inf)
    np.maximum.at(best, owner, pos)
    best[truncated] = np.nan
    survived = paths[:, n] > 0
    return BrwBatch(ids, survived, best, paths, truncated)


ENGINES: dict[str, Callable[[SimConfig, np.ndarray], BrwBatch]] = {
    "brw": simulate_brw_batch,
    "ind": simulate_ind_batch,
}


def _engine(op) -> Callable[[SimConfig, np.ndarray], BrwBatch]:
    if callable(op):
        return {simulate_brw: simulate_brw_batch, simulate_ind_max: simulate_ind_batch}.get(op, op)
    try:
        return ENGINES[op]
    except KeyError:
        raise ConfigError(f"unknown simulation model {op!r}; use 'brw' or 'ind'") from None


def simulate_brw(cfg: SimConfig, replica_index: int) -> BrwRunResult:
    return simulate_brw_batch(cfg, [replica_index]).result(0)


def simulate_ind_max(cfg: SimConfig, replica_index: int) -> BrwRunResult:
    return simulate_ind_batch(cfg, [replica_index]).result(0)


def chunk_size(cfg: SimConfig) -> int:
    """Replicas per batch, so a batch holds about CHUNK_PARTICLES particles in the last generation."""
    expected = min(cfg.offspring.mean_m**cfg.horizon_n, float(cfg.population_cap))
    return int(max(1, min(CHUNK, CHUNK_PARTICLES // max(1.0, expected))))


def _run_range(args):
    engine, cfg, start, stop = args
    return engine(cfg, np.arange(start, stop, dtype=np.int64))


def run_range(cfg: SimConfig, op, start: int, stop: int, workers: int = 1) -> BrwBatch:
    """Simulate replicas start..stop-1, fanned out over worker processes.

    Chunk boundaries and worker count never affect the returned values.
    """
    engine = _engine(op)
    size = chunk_size(cfg)
    bounds = [(s, min(s + size, stop)) for s in range(start, stop, size)]
    tasks = [(engine, cfg, a, b) for a, b in bounds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_range, tasks))
    else:
        parts = [_run_range(t) for t in tasks]
    return BrwBatch.concat(parts, cfg.horizon_n)


class ConditionedRuns(NamedTuple):
    batch: BrwBatch
    attempts: int
    acceptance_rate: float
    truncated: int


def run_conditioned(cfg: SimConfig, op, replicas: int, workers: int = 1) -> ConditionedRuns:
    """Collect ``replicas`` runs that survive to the horizon, by rejection.

    Replica indices are consumed in increasing order and the first
    ``replicas`` survivors are kept, so the sample does not depend on how
    the indices were batched. ``attempts`` counts indices up to the last
    kept one; truncated runs among them are reported and left out of the
    acceptance rate, which estimates P(Z_n > 0).
    """
    if not cfg.condition_on_survival:
        raise ConfigError("run_conditioned needs condition_on_survival=true")
    if replicas < 1:
        raise ConfigError("replicas must be positive")
    p_guess = max(cfg.survival_probability(), MIN_ACCEPTANCE)
    kept: list[BrwBatch] = []
    truncated_ids: list[np.ndarray] = []
    n_kept, start = 0, 0
    while n_kept < replicas:
        need = replicas - n_kept
        size = min(max(int(1.05 * need / p_guess) + 64, 256), PROBE_ATTEMPTS)
        batch = run_range(cfg, op, start, start + size, workers)
        start += size
        part = batch.select(batch.survived & ~batch.truncated)
        kept.append(part)
        truncated_ids.append(batch.replicas[batch.truncated])
        n_kept += len(part)
        if start >= PROBE_ATTEMPTS and n_kept < MIN_ACCEPTANCE * start:
            n_trunc = sum(t.size for t in truncated_ids)
            if n_trunc > start - n_trunc:
                raise ResourceError(
                    f"{n_trunc} of {start} runs exceeded population_cap={cfg.population_cap} "
                    f"before {replicas} untruncated survivors were found; raise the cap"
                )
            raise SimulationAbort(
                f"only {n_kept} of {start} runs survived to n={cfg.horizon_n} "
                f"(acceptance below {MIN_ACCEPTANCE:g}); conditioning is not feasible"
            )
    merged = BrwBatch.concat(kept, cfg.horizon_n).select(slice(0, replicas))
    attempts = int(merged.replicas[-1]) + 1
    truncated = int(np.count_nonzero(np.concatenate(truncated_ids) < attempts))
    rate = replicas / (attempts - truncated)
    return ConditionedRuns(merged, attempts, rate, truncated)


def wn_samples(cfg: SimConfig, replicas: int, workers: int = 1):
    """W_n = Z_n / m^n for unconditioned replicas 0..replicas-1.

    Returns (values, truncated_count); truncated replicas are left out.
    """
    paths, truncated = population_range(cfg, replicas, workers)
    z = paths[~truncated, cfg.horizon_n].astype(float)
    return z / cfg.offspring.mean_m**cfg.horizon_n, int(truncated.sum())


def _paths_range(args):
    cfg, start, stop = args
    return population_paths(cfg, np.arange(start, stop, dtype=np.int64))


def population_range(cfg: SimConfig, replicas: int, workers: int = 1):
    bounds = [(cfg, s, min(s + CHUNK, replicas)) for s in range(0, replicas, CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_paths_range, bounds))
    else:
        parts = [_paths_range(b) for b in bounds]
    if not parts:
        return np.zeros((0, cfg.horizon_n + 1), np.int64), np.zeros(0, bool)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def dkw_radius(n: int, level: float = 0.99) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band with coverage ``level``."""
    return math.sqrt(math.log(2.0 / (1.0 - level)) / (2.0 * n))


def empirical_cdf(samples: np.ndarray, x_grid) -> np.ndarray:
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(x_grid, dtype=float), side="right") / s.size


@dataclass(frozen=True, eq=False)
class DominationExperiment:
    x_grid: np.ndarray
    cdf_brw: np.ndarray
    cdf_ind: np.ndarray
    radius_brw: float
    radius_ind: float
    violations: np.ndarray
    acceptance_brw: float
    acceptance_ind: float

    @property
    def holds(self) -> bool:
        return not bool(self.violations.any())


def domination_experiment(cfg: SimConfig, replicas: int, x_grid, workers: int = 1, level: float = 0.99):
    """Empirical CDFs of M_n and of the independent-walks maximum on x_grid.

    A grid point is flagged when F_brw + r_brw < F_ind - r_ind, i.e. the
    inequality P(M_n <= x) >= P(M~_n <= x) fails beyond both DKW bands.
    """
    xs = np.asarray(x_grid, dtype=float)
    cdfs, rates = [], []
    for op in ("brw", "ind"):
        if cfg.condition_on_survival:
            runs = run_conditioned(cfg, op, replicas, workers)
            batch, rate = runs.batch, runs.acceptance_rate
        else:
            batch, rate = run_range(cfg, op, 0, replicas, workers), 1.0
            batch = batch.select(~batch.truncated)
        cdfs.append(empirical_cdf(batch.max_position, xs))
        rates.append(rate)
    radius = dkw_radius(replicas, level)
    violations = cdfs[0] + radius < cdfs[1] - radius
    return DominationExperiment(xs, cdfs[0], cdfs[1], radius, radius, violations, rates[0], rates[1])


def manifest(cfg: SimConfig, **extra) -> dict:
    from . import __version__

    out = {"code_version": __version__, "config": cfg.to_json(), "seed": int(cfg.seed)}
    out.update(extra)
    return out

