"""Command line interface.

Subcommands: ``bootstrap-seeds`` (build a quality seed pool), ``run`` (run
a campaign), ``report`` (summaries and box plots from persisted results),
``validate-road`` (check one road JSON file).

Exit codes: 0 success, 1 invalid road (validate-road only), 2 config
error, 3 executor error.  ``ROADSEARCH_OUT`` and ``ROADSEARCH_SEED``
override the output directory and the base RNG seed.
"""

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from .campaign import emit_report, load_results, run_campaign
from .config import CampaignConfig, EngineConfig, PsoParams, preset_config
from .engines import bootstrap_seed_pool
from .errors import ConfigurationError, ExecutorError
from .executor import resolve_executor
from .geometry import catmull_rom_sample, road_from_json, validate_road

ENV_OUT = "ROADSEARCH_OUT"
ENV_SEED = "ROADSEARCH_SEED"

_CAMPAIGN_KEYS = {
    "preset": str,
    "time_budget": float,
    "max_evaluations": int,
    "map_size": float,
    "speed_limit": float,
    "tolerance_threshold": float,
    "executor": str,
    "repetitions": int,
    "output_dir": str,
    "seed_pool_path": str,
    "bootstrap_candidates": int,
    "bootstrap_executions": int,
}
_ENGINE_KEYS = {
    "engine": str,
    "population_size": int,
    "offspring_size": int,
    "tournament_size": int,
    "crossover_rate": float,
    "mutation_rate": float,
    "eta": float,
    "rng_seed": int,
    "elitism": lambda s: s.lower() in ("1", "true", "yes", "on"),
    "w": float,
    "c1": float,
    "c2": float,
}
_ROAD_KEYS = {"lane_width": float, "samples_per_segment": int, "min_radius": float}


def read_config_file(path) -> tuple[dict, dict]:
    """Flat INI config: [campaign], [engine], [road] sections."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigurationError(f"cannot read config file {path}")
    campaign: dict = {}
    engine: dict = {}
    for section, keys, target in (
        ("campaign", _CAMPAIGN_KEYS, campaign),
        ("engine", _ENGINE_KEYS, engine),
        ("road", _ROAD_KEYS, campaign),
    ):
        if not parser.has_section(section):
            continue
        for key, value in parser.items(section):
            if key not in keys:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            target[key] = keys[key](value)
    return campaign, engine


def build_campaign_config(args) -> CampaignConfig:
    campaign_kw: dict = {}
    engine_kw: dict = {}
    if args.config:
        campaign_kw, engine_kw = read_config_file(args.config)

    # CLI flags override the config file.
    flag_map = {
        "time_budget": args.time_budget,
        "max_evaluations": args.max_evaluations,
        "map_size": args.map_size,
        "speed_limit": args.speed_limit,
        "tolerance_threshold": args.tolerance,
        "executor": args.executor,
        "repetitions": args.repetitions,
        "output_dir": args.out,
        "seed_pool_path": args.seed_pool,
    }
    for key, value in flag_map.items():
        if value is not None:
            campaign_kw[key] = value
    if args.engine is not None:
        engine_kw["engine"] = args.engine
    if args.seed is not None:
        engine_kw["rng_seed"] = args.seed

    # Environment overrides for output dir and base seed.
    if os.environ.get(ENV_OUT):
        campaign_kw["output_dir"] = os.environ[ENV_OUT]
    if os.environ.get(ENV_SEED):
        engine_kw["rng_seed"] = int(os.environ[ENV_SEED])

    pso_kw = {k: engine_kw.pop(k) for k in ("w", "c1", "c2") if k in engine_kw}
    if pso_kw:
        engine_kw["pso"] = PsoParams(**pso_kw)
    if "engine" not in engine_kw:
        raise ConfigurationError("no engine selected (use --engine or a config file)")
    engine_config = EngineConfig(**engine_kw)

    preset = args.preset or campaign_kw.pop("preset", "custom")
    campaign_kw.pop("preset", None)
    return preset_config(preset, engine_config=engine_config, **campaign_kw)


def cmd_run(args) -> int:
    config = build_campaign_config(args)
    results = run_campaign(config)
    for i, result in enumerate(results):
        m = result.metrics
        print(
            f"run {i}: generated={m.total_generated} valid={m.valid_count} "
            f"failures={m.detected_failures} sparseness={m.sparseness:.3f}"
        )
    if config.output_dir:
        print(f"results written to {config.output_dir}")
    return 0


def cmd_bootstrap(args) -> int:
    engine_config = EngineConfig(engine="random", rng_seed=args.seed if args.seed is not None else 0)
    kwargs = {}
    if args.map_size is not None:
        kwargs["map_size"] = args.map_size
    config = CampaignConfig(
        engine_config=engine_config,
        executor=args.executor or "builtin",
        bootstrap_candidates=args.candidates,
        bootstrap_executions=args.executions,
        **kwargs,
    )
    executor = resolve_executor(config.executor)
    pool = bootstrap_seed_pool(
        config, executor, config.bootstrap_executions, out_path=args.out
    )
    random_valid, failure_derived = pool.split()
    print(
        f"seed pool: {len(pool.entries)} roads "
        f"({len(failure_derived)} failure-derived) -> {args.out}"
    )
    return 0


def cmd_report(args) -> int:
    results = load_results(args.results_dir)
    written = emit_report(results, args.out or args.results_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_validate_road(args) -> int:
    try:
        data = json.loads(Path(args.road).read_text())
        cp, spec = road_from_json(data)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"cannot load road file {args.road}: {exc}") from exc
    report = validate_road(catmull_rom_sample(cp, spec), spec)
    if report.is_valid:
        print(f"{args.road}: valid")
        return 0
    for violation in report.violations:
        print(f"{args.road}: {violation.constraint_id}: {violation.detail}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadsearch",
        description="Search-based road generation for testing lane-keeping drivers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a test-generation campaign")
    run.add_argument("--engine", choices=["ga", "es_plus", "es_comma", "pso", "random"])
    run.add_argument("--preset", choices=["set1", "set2", "set1-mini", "set2-mini", "custom"])
    run.add_argument("--time-budget", type=float, help="seconds per repetition")
    run.add_argument("--max-evaluations", type=int, help="deterministic evaluation cap")
    run.add_argument("--tolerance", type=float, help="failing tolerance threshold (0, 1]")
    run.add_argument("--speed-limit", type=float, help="km/h")
    run.add_argument("--map-size", type=float, help="map side in meters")
    run.add_argument("--seed", type=int, help="base RNG seed")
    run.add_argument("--repetitions", type=int)
    run.add_argument("--executor", help="builtin or subprocess:<command>")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed-pool", help="seed pool JSON path (loaded or written)")
    run.add_argument("--config", help="INI config file")
    run.set_defaults(func=cmd_run)

    boot = sub.add_parser("bootstrap-seeds", help="build a quality seed pool")
    boot.add_argument("--out", required=True, help="pool JSON path")
    boot.add_argument("--candidates", type=int, default=300)
    boot.add_argument("--executions", type=int, default=40)
    boot.add_argument("--seed", type=int)
    boot.add_argument("--map-size", type=float)
    boot.add_argument("--executor")
    boot.set_defaults(func=cmd_bootstrap)

    rep = sub.add_parser("report", help="summarize persisted campaign results")
    rep.add_argument("results_dir", help="directory with result_rep*.json files")
    rep.add_argument("--out", help="report output directory (default: results dir)")
    rep.set_defaults(func=cmd_report)

    val = sub.add_parser("validate-road", help="validate one road JSON file")
    val.add_argument("road", help="road JSON path")
    val.set_defaults(func=cmd_validate_road)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ExecutorError as exc:
        print(f"executor error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
