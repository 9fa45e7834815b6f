"""Command-line front end: ``brwlab {rates,simulate,estimate,oracle,verify}``."""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import re
import sys
from pathlib import Path

import jsonschema

from . import __version__
from .errors import BrwlabError, ConfigError, ResourceError, SimulationAbort
from .estimate import Event, trend_gw_lower, trend_ind_upper, trend_mc
from .gw import OffspringLaw, validate_offspring
from .oracle import MAX_POINTS, brw_max_cdf_exact, conditional_cdf, ind_max_cdf_exact
from .output import rate_svg, write_json, write_text
from .rates import ModelParams, RateKind, format_number, rate_curve
from .simulate import SimConfig, run_conditioned, run_range
from .steps import LatticeStepLaw, StepLaw, lattice_from_json, step_law_from_json
from . import verify as verify_mod

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_ABORT, EXIT_RESOURCE = 0, 1, 2, 3, 4

_PMF = {
    "type": "object",
    "patternProperties": {r"^[0-9]+$": {"type": "number", "minimum": 0}},
    "additionalProperties": False,
    "minProperties": 1,
}
_STEP = {
    "type": "object",
    "properties": {"r": {"type": "number"}, "lambda_plus": {"type": "number"}, "lambda_minus": {"type": "number"}},
    "required": ["r", "lambda_plus", "lambda_minus"],
    "additionalProperties": False,
}
_LATTICE = {
    "type": "object",
    "properties": {
        "h": {"type": "number", "exclusiveMinimum": 0},
        "pmf": {
            "type": "object",
            "patternProperties": {r"^-?[0-9]+$": {"type": "number", "minimum": 0}},
            "additionalProperties": False,
            "minProperties": 1,
        },
    },
    "required": ["pmf"],
    "additionalProperties": False,
}
_MODEL = {
    "type": "object",
    "properties": {"offspring": _PMF, "step": _STEP, "lattice": _LATTICE},
    "required": ["offspring"],
    "oneOf": [{"required": ["step"]}, {"required": ["lattice"]}],
    "additionalProperties": False,
}
_GRID_ITEM = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*(-?[0-9.]+(e-?[0-9]+)?\s*\*\s*)?alpha\s*$"}]}
_COMMON = {"seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}, "workers": {"type": "integer", "minimum": 1}}

SCHEMAS = {
    "rates": {
        "type": "object",
        "properties": {
            **_COMMON,
            "model": _MODEL,
            "models": {"type": "array", "items": _MODEL, "minItems": 1},
            "rates": {
                "type": "object",
                "properties": {
                    "kinds": {"type": "array", "items": {"enum": [k.value for k in RateKind]}, "minItems": 1},
                    "x_grid": {"type": "array", "items": _GRID_ITEM, "minItems": 1},
                    "n": {"type": "integer", "minimum": 0},
                    "plot": {"type": "boolean"},
                },
                "required": ["x_grid"],
                "additionalProperties": False,
            },
        },
        "required": ["rates"],
        "oneOf": [{"required": ["model"]}, {"required": ["models"]}],
        "additionalProperties": False,
    },
    "simulate": {
        "type": "object",
        "properties": {
            **_COMMON,
            "model": _MODEL,
            "simulate": {
                "type": "object",
                "properties": {
                    "engine": {"enum": ["brw", "ind"]},
                    "horizon_n": {"type": "integer", "minimum": 0},
                    "replicas": {"type": "integer", "minimum": 1},
                    "population_cap": {"type": "integer", "minimum": 1},
                    "condition_on_survival": {"type": "boolean"},
                    "raw_csv": {"type": "boolean"},
                },
                "required": ["horizon_n", "replicas"],
                "additionalProperties": False,
            },
        },
        "required": ["model", "simulate"],
        "additionalProperties": False,
    },
    "estimate": {
        "type": "object",
        "properties": {
            **_COMMON,
            "model": _MODEL,
            "estimate": {
                "type": "object",
                "properties": {
                    "kind": {"enum": ["MC", "IND_UPPER", "GW_LOWER"]},
                    "n_list": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                    "x": {"type": "number"},
                    "side": {"enum": ["upper", "lower"]},
                    "replicas": {"type": "integer"},
                    "engine": {"enum": ["brw", "ind"]},
                    "population_cap": {"type": "integer", "minimum": 1},
                    "condition_on_survival": {"type": "boolean"},
                    "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                },
                "required": ["kind", "n_list"],
                "additionalProperties": False,
            },
        },
        "required": ["model", "estimate"],
        "additionalProperties": False,
    },
    "oracle": {
        "type": "object",
        "properties": {
            **_COMMON,
            "model": _MODEL,
            "oracle": {
                "type": "object",
                "properties": {
                    "horizon_n": {"type": "integer", "minimum": 0},
                    "maxima": {"type": "array", "items": {"enum": ["brw", "ind"]}, "minItems": 1},
                    "conditional": {"type": "boolean"},
                    "max_points": {"type": "integer", "minimum": 1},
                },
                "required": ["horizon_n"],
                "additionalProperties": False,
            },
        },
        "required": ["model", "oracle"],
        "additionalProperties": False,
    },
    "verify": {"type": "object", "properties": dict(_COMMON), "additionalProperties": False},
}


def load_config(command: str, path: str | None) -> dict:
    """Read and schema-check the JSON config of a subcommand."""
    if path is None:
        if command == "verify":
            return {}
        raise ConfigError(f"{command} needs --config")
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return cfg


def parse_model(model: dict, strict: bool) -> tuple[OffspringLaw, StepLaw | LatticeStepLaw]:
    offspring = validate_offspring(model["offspring"], supercritical=strict)
    if "step" in model:
        return offspring, step_law_from_json(model["step"])
    return offspring, lattice_from_json(model["lattice"])


_ALPHA = re.compile(r"^\s*(?:(?P<k>-?[0-9.]+(?:e-?[0-9]+)?)\s*\*\s*)?alpha\s*$")


def resolve_grid(items, alpha: float) -> list[float]:
    """Numbers pass through; "alpha" and "k*alpha" are resolved against the model."""
    out = []
    for item in items:
        if isinstance(item, str):
            m = _ALPHA.match(item)
            if m is None:
                raise ConfigError(f"bad grid entry {item!r}")
            out.append((float(m["k"]) if m["k"] else 1.0) * alpha)
        else:
            out.append(float(item))
    return out


def _manifest(command: str, cfg: dict, seed, outputs, **extra) -> dict:
    return {"command": command, "code_version": __version__, "config": cfg, "seed": seed, "outputs": sorted(outputs), **extra}


def cmd_rates(cfg: dict, out: Path, seed: int, workers: int) -> int:
    opts = cfg["rates"]
    kinds = opts.get("kinds", [RateKind.I.value, RateKind.IBRW.value, RateKind.IIND.value])
    models = cfg["models"] if "models" in cfg else [cfg["model"]]
    outputs = []
    for i, model in enumerate(models):
        offspring, step = parse_model(model, strict=True)
        if not isinstance(step, StepLaw):
            raise ConfigError("rate functions need a stretched-exponential step law")
        params = ModelParams(offspring, step)
        grid = resolve_grid(opts["x_grid"], params.alpha)
        curves = []
        for kind in kinds:
            if kind == RateKind.BOETTCHER_SCALING.value and not params.boettcher:
                raise ConfigError(f"model {i}: BOETTCHER_SCALING needs a law with p(0) + p(1) = 0")
            curves.append(rate_curve(params, kind, grid, opts.get("n")))
        text = "x,value,kind\n" + "".join(c.to_csv().split("\n", 1)[1] for c in curves)
        stem = "rates" if len(models) == 1 else f"rates_{i}"
        outputs.append(write_text(out / f"{stem}.csv", text).name)
        if opts.get("plot", True):
            outputs.append(write_text(out / f"{stem}.svg", rate_svg(curves, f"model {i}, alpha = {params.alpha:.4g}")).name)
    write_json(out / "manifest.json", _manifest("rates", cfg, seed, outputs))
    return EXIT_OK


def _sim_config(model, opts, n, seed) -> SimConfig:
    offspring, step = parse_model(model, strict=False)
    return SimConfig(
        offspring,
        step,
        n,
        population_cap=opts.get("population_cap", 10**6),
        seed=seed,
        condition_on_survival=opts.get("condition_on_survival", True),
    )


def cmd_simulate(cfg: dict, out: Path, seed: int, workers: int) -> int:
    opts = cfg["simulate"]
    sim = _sim_config(cfg["model"], opts, opts["horizon_n"], seed)
    engine, replicas = opts.get("engine", "brw"), opts["replicas"]
    extra = {}
    if sim.condition_on_survival:
        runs = run_conditioned(sim, engine, replicas, workers)
        batch = runs.batch
        extra = {"attempts": runs.attempts, "acceptance_rate": runs.acceptance_rate, "truncated_runs": runs.truncated}
    else:
        batch = run_range(sim, engine, 0, replicas, workers)
        extra = {"truncated_runs": int(batch.truncated.sum())}
    outputs = []
    if opts.get("raw_csv", True):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["replica", "survived", "Mn", "Zn"])
        for i in range(len(batch)):
            writer.writerow(
                [int(batch.replicas[i]), int(batch.survived[i]), format_number(float(batch.max_position[i])), int(batch.final_population[i])]
            )
        outputs.append(write_text(out / "replicas.csv", buf.getvalue()).name)
    write_json(out / "manifest.json", _manifest("simulate", cfg, seed, outputs, **extra))
    return EXIT_OK


def cmd_estimate(cfg: dict, out: Path, seed: int, workers: int) -> int:
    opts = cfg["estimate"]
    kind = opts["kind"]
    offspring, step = parse_model(cfg["model"], strict=False)
    if kind == "MC":
        replicas = opts.get("replicas", 0)
        if replicas < 100:
            raise ConfigError(f"estimate needs replicas >= 100, got {replicas}")
        if "x" not in opts:
            raise ConfigError("estimate kind MC needs x")
        base = _sim_config(cfg["model"], opts, 0, seed)
        table = trend_mc(base, Event(opts.get("side", "upper"), opts["x"]), opts["n_list"], replicas, opts.get("engine", "brw"), workers, opts.get("level", 0.99))
    elif kind == "IND_UPPER":
        if not isinstance(step, LatticeStepLaw) or "x" not in opts:
            raise ConfigError("IND_UPPER needs a lattice step law and x")
        table = trend_ind_upper(step, offspring, opts["x"], opts["n_list"])
    else:
        table = trend_gw_lower(offspring, opts["n_list"])
    outputs = [write_text(out / "estimate.csv", table.to_csv()).name]
    undefined = [r.n for r in table.rows if r.undefined]
    write_json(out / "manifest.json", _manifest("estimate", cfg, seed, outputs, truncated_runs=0, undefined_n=undefined))
    return EXIT_OK


def cmd_oracle(cfg: dict, out: Path, seed: int, workers: int) -> int:
    opts = cfg["oracle"]
    offspring, step = parse_model(cfg["model"], strict=False)
    if not isinstance(step, LatticeStepLaw):
        raise ConfigError("exact oracles need a lattice step law")
    n, cap = opts["horizon_n"], opts.get("max_points", MAX_POINTS)
    outputs = []
    for which in opts.get("maxima", ["brw", "ind"]):
        fn = brw_max_cdf_exact if which == "brw" else ind_max_cdf_exact
        dist = fn(step, offspring, n, cap)
        if opts.get("conditional", False):
            dist = conditional_cdf(dist)
        outputs.append(write_text(out / f"oracle_{which}.csv", dist.to_csv()).name)
        outputs.append(write_json(out / f"oracle_{which}.json", dist.sidecar()).name)
    write_json(out / "manifest.json", _manifest("oracle", cfg, seed, outputs))
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path, seed: int, workers: int) -> int:
    results = verify_mod.run_all(seed, workers, out)
    passed = sum(r.ok for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_VERIFY


COMMANDS = {"rates": cmd_rates, "simulate": cmd_simulate, "estimate": cmd_estimate, "oracle": cmd_oracle, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brwlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"brwlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed; overrides the config")
        p.add_argument("--out", default=f"brwlab_{name}", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes for replica fan-out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config)
        cfg = copy.deepcopy(cfg)
        if args.seed is not None:
            cfg["seed"] = args.seed
        default_seed = verify_mod.DEFAULT_SEED if args.command == "verify" else 0
        seed = cfg.get("seed", default_seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        workers = args.workers if args.workers is not None else cfg.get("workers", 1)
        if workers < 1:
            raise ConfigError("workers must be positive")
        return COMMANDS[args.command](cfg, Path(args.out), seed, workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAbort as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ResourceError, MemoryError) as exc:
        print(f"resource bound exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except BrwlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
