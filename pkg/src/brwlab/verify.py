"""Acceptance suite behind ``brwlab verify``.

Each criterion returns its verdict together with CSV artifacts whose bytes
depend only on the seed, never on timings or on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .estimate import clopper_pearson, sumasmax_ratio, trend_gw_lower, trend_ind_upper
from .gw import validate_offspring
from .oracle import brw_max_cdf_exact, conditional_cdf, domination_check_exact, ind_max_cdf_exact
from .output import write_json, write_text
from .rates import H_closed, H_variational, ModelParams, format_number, rate_IBRW, rate_Iind
from .simulate import SimConfig, dkw_radius, population_range, run_conditioned, wn_samples
from .steps import LatticeStepLaw, make_centered, make_lattice_surrogate

DEFAULT_SEED = 20240607


def schroeder_matrix() -> list[tuple[str, ModelParams]]:
    """Three Schroeder parameter sets used by the rate-function criteria."""
    return [
        ("A", ModelParams(validate_offspring({0: 0.25, 2: 0.75}), make_centered(0.5, 1.0, 1.0))),
        ("B", ModelParams(validate_offspring({0: 0.2, 1: 0.2, 2: 0.6}), make_centered(0.3, 1.0, 2.0))),
        ("C", ModelParams(validate_offspring({1: 0.5, 2: 0.5}), make_centered(0.7, 2.0, 1.0))),
    ]


def pm_one() -> LatticeStepLaw:
    return make_lattice_surrogate(1.0, {-1: 0.5, 1: 0.5})


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    limit_s: float | None = None
    elapsed_s: float = 0.0
    artifacts: dict = field(default_factory=dict)

    @property
    def in_time(self) -> bool:
        return self.limit_s is None or self.elapsed_s < self.limit_s

    @property
    def ok(self) -> bool:
        return self.passed and self.in_time


def h_equivalence() -> CriterionResult:
    rows, worst = [], 0.0
    ok = True
    for label, params in schroeder_matrix():
        alpha = params.alpha
        for x in np.linspace(-3 * alpha, alpha - 1e-3, 200):
            closed = H_closed(params, float(x))
            var = H_variational(params, float(x)).value
            diff = abs(var - closed)
            tol = 1e-6 * (1 + abs(closed))
            ok &= diff <= tol
            worst = max(worst, diff / (1 + abs(closed)))
            rows.append((label, float(x), closed, var, diff, diff <= tol))
    art = _csv(["set", "x", "h_closed", "h_variational", "abs_diff", "ok"], rows)
    return CriterionResult(1, "variational H equals closed H", bool(ok), f"max relative gap {worst:.3g}", 2.0, artifacts={"c1_h_equivalence.csv": art})


def rate_structure() -> CriterionResult:
    rows, ok = [], True
    for label, params in schroeder_matrix():
        alpha = params.alpha
        for x in (alpha - 1e-6, alpha + 1e-6):
            v = rate_IBRW(params, x)
            ok &= abs(v) <= 1e-5
            rows.append((label, "continuity", x, v, math.nan, abs(v) <= 1e-5))
        for x in np.linspace(alpha, 4 * alpha, 50):
            b, i = rate_IBRW(params, float(x)), rate_Iind(params, float(x))
            ok &= b == i
            rows.append((label, "equal_above_alpha", float(x), b, i, b == i))
        for x in np.linspace(-3 * alpha, alpha, 201)[:-1]:
            b, i = rate_IBRW(params, float(x)), rate_Iind(params, float(x))
            ok &= i >= b
            rows.append((label, "ind_dominates_below_alpha", float(x), b, i, i >= b))
    art = _csv(["set", "check", "x", "I_BRW", "I_ind", "ok"], rows)
    return CriterionResult(2, "rate-function structure", bool(ok), "continuity, equality and ordering", 1.0, artifacts={"c2_rate_structure.csv": art})


def exact_domination() -> CriterionResult:
    rows, ok, worst = [], True, 0.0
    for label, pmf in (("0:1/4,2:3/4", {0: 0.25, 2: 0.75}), ("2:1/2,3:1/2", {2: 0.5, 3: 0.5})):
        law = validate_offspring(pmf)
        for n in range(7):
            res = domination_check_exact(pm_one(), law, n)
            ok &= res.holds
            worst = max(worst, res.max_violation)
            rows.append((label, n, res.max_violation, res.holds))
    art = _csv(["offspring", "n", "max_violation", "holds"], rows)
    return CriterionResult(3, "exact domination on the lattice", bool(ok), f"max violation {worst:.3g}", 5.0, artifacts={"c3_domination.csv": art})


def mc_vs_oracle(seed: int, workers: int, replicas: int = 100_000, n: int = 4) -> CriterionResult:
    law = validate_offspring({0: 0.25, 2: 0.75})
    cfg = SimConfig(law, pm_one(), n, seed=seed)
    radius = dkw_radius(replicas, 0.99)
    rows, ok, detail = [], True, []
    for op, exact in (("brw", brw_max_cdf_exact), ("ind", ind_max_cdf_exact)):
        truth = conditional_cdf(exact(pm_one(), law, n))
        runs = run_conditioned(cfg, op, replicas, workers)
        sample = np.sort(runs.batch.max_position)
        emp = np.searchsorted(sample, truth.x, side="right") / sample.size
        dist = float(np.max(np.abs(emp - truth.cdf)))
        ok &= dist <= radius and runs.truncated == 0
        detail.append(f"{op} sup gap {dist:.4f}")
        for x, e, t in zip(truth.x, emp, truth.cdf):
            rows.append((op, float(x), float(e), float(t), abs(e - t) <= radius))
        rows.append((op, "acceptance_rate", runs.acceptance_rate, cfg.survival_probability(), True))
    art = _csv(["model", "x", "empirical_cdf", "oracle_cdf", "ok"], rows)
    return CriterionResult(
        4, "Monte Carlo against the exact oracle", bool(ok), f"{', '.join(detail)} (band {radius:.4f})", 30.0, artifacts={"c4_mc_vs_oracle.csv": art}
    )


def kesten_stigum(seed: int, workers: int, replicas: int = 100_000) -> CriterionResult:
    law = validate_offspring({0: 0.25, 2: 0.75})
    w, truncated = wn_samples(SimConfig(law, pm_one(), 10, seed=seed, condition_on_survival=False), replicas, workers)
    mean, se = float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size))
    mean_ok = abs(mean - 1.0) <= 4 * se and truncated == 0
    cfg30 = SimConfig(law, pm_one(), 30, population_cap=10**9, seed=seed, condition_on_survival=False)
    paths, trunc30 = population_range(cfg30, replicas, workers)
    extinct = int(np.count_nonzero(paths[:, 30] == 0))
    lo, hi = clopper_pearson(extinct, replicas, 0.99)
    q_ok = lo <= 1 / 3 <= hi and not trunc30.any()
    rows = [
        ("mean_W10", mean, se, 1.0, mean_ok),
        ("extinct_by_30", extinct / replicas, lo, hi, q_ok),
    ]
    art = _csv(["quantity", "value", "low_or_se", "high_or_target", "ok"], rows)
    detail = f"mean W_10 {mean:.4f} (se {se:.4f}); extinction freq {extinct / replicas:.4f} in [{lo:.4f}, {hi:.4f}]"
    return CriterionResult(5, "Kesten-Stigum martingale", bool(mean_ok and q_ok), detail, 60.0, artifacts={"c5_kesten_stigum.csv": art})


def gw_lower() -> CriterionResult:
    law = validate_offspring({0: 0.25, 2: 0.75})
    table = trend_gw_lower(law, range(5, 15))
    last = [r.p_hat for r in table.rows[-3:]]
    ok = all(abs(r - 0.5) <= 0.05 for r in last)
    return CriterionResult(6, "Schroeder lower deviation of Z_n", ok, "final ratios " + ", ".join(f"{r:.5f}" for r in last), 1.0, artifacts={"c6_gw_lower.csv": table.to_csv()})


def ind_upper_trend() -> CriterionResult:
    lattice = make_lattice_surrogate(1.0, {-1: 0.25, 0: 0.5, 1: 0.25})
    table = trend_ind_upper(lattice, validate_offspring({0: 0.25, 2: 0.75}), 0.9, [10, 20, 30, 40])
    last = table.rows[-1]
    ok = table.gaps_decreasing and last.gap < 0.1 * last.analytic_rate
    detail = "gaps " + ", ".join(f"{g:.4f}" for g in table.gaps) + f"; analytic {last.analytic_rate:.5f}"
    return CriterionResult(7, "independent-walks upper trend", ok, detail, 10.0, artifacts={"c7_ind_upper.csv": table.to_csv()})


def single_big_jump(seed: int, workers: int, replicas: int = 10**7) -> CriterionResult:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = sumasmax_ratio(make_centered(0.5, 1.0, 1.0), 10, 60.0, replicas, seed=seed, workers=workers)
    ok = res.ci_low <= 1.3 and res.ci_high >= 0.7
    rows = [(res.successes, res.trials, res.reference, res.ratio, res.ci_low, res.ci_high, ok)]
    art = _csv(["successes", "trials", "n_tail_upper", "ratio", "ci_low", "ci_high", "ok"], rows)
    notes = "; warnings: " + " | ".join(res.warnings) if res.warnings else ""
    return CriterionResult(8, "single-big-jump ratio", ok, f"ratio {res.ratio:.4f} CI [{res.ci_low:.4f}, {res.ci_high:.4f}]{notes}", 120.0, artifacts={"c8_sumasmax.csv": art})


def internal_determinism(seed: int, workers: int) -> CriterionResult:
    """Recompute a simulation-heavy artifact with one and with several workers."""
    law = validate_offspring({0: 0.25, 2: 0.75})
    cfg = SimConfig(law, pm_one(), 6, seed=seed)
    a = run_conditioned(cfg, "brw", 20_000, 1)
    b = run_conditioned(cfg, "brw", 20_000, max(2, workers))
    same = np.array_equal(a.batch.max_position, b.batch.max_position) and np.array_equal(a.batch.population, b.batch.population)
    return CriterionResult(9, "determinism across worker counts", bool(same), "conditioned runs identical for 1 and several workers")


CRITERIA: tuple[Callable[..., CriterionResult], ...] = (
    h_equivalence,
    rate_structure,
    exact_domination,
    mc_vs_oracle,
    kesten_stigum,
    gw_lower,
    ind_upper_trend,
    single_big_jump,
    internal_determinism,
)

_SEEDED = {mc_vs_oracle, kesten_stigum, single_big_jump, internal_determinism}


def run_all(seed: int = DEFAULT_SEED, workers: int = 1, out: Path | None = None, echo=print) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        start = time.perf_counter()
        res = fn(seed, workers) if fn in _SEEDED else fn()
        res.elapsed_s = time.perf_counter() - start
        results.append(res)
        if echo:
            echo(format_line(res))
    if out is not None:
        write_artifacts(results, Path(out), seed)
    return results


def format_line(res: CriterionResult) -> str:
    verdict = "PASS" if res.ok else "FAIL"
    timing = f"{res.elapsed_s:.2f}s" + (f" (limit {res.limit_s:g}s)" if res.limit_s else "")
    late = "" if res.in_time else " [over time limit]"
    return f"[{verdict}] {res.number}. {res.name}: {res.detail}; {timing}{late}"


def write_artifacts(results: list[CriterionResult], out: Path, seed: int) -> list[Path]:
    from . import __version__

    written = []
    for res in results:
        for name, text in res.artifacts.items():
            written.append(write_text(out / name, text))
    summary = _csv(["criterion", "name", "passed"], [(r.number, r.name, r.passed) for r in results])
    written.append(write_text(out / "summary.csv", summary))
    manifest = {"command": "verify", "code_version": __version__, "seed": seed, "outputs": sorted(p.name for p in written)}
    written.append(write_json(out / "manifest.json", manifest))
    check_outputs_parse(written)
    return written


def check_outputs_parse(paths) -> None:
    """Every emitted file must be a CSV with a header row or valid JSON."""
    for path in paths:
        text = Path(path).read_text(encoding="utf-8")
        if path.suffix == ".json":
            json.loads(text)
        elif path.suffix == ".csv":
            rows = list(csv.reader(io.StringIO(text)))
            if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
                raise ValueError(f"{path} is not a rectangular CSV with a header")

