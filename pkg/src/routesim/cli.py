"""Command line interface: config-driven runs plus small utility commands.

Subcommands
-----------
run
    Execute a full experiment (human stabilization, mutation, training,
    testing) from a declarative YAML config and write all artifacts into an
    output directory: episodes.csv, flows.csv, kpis.json, beliefs.csv,
    policies.csv, charts/*.svg and an echo of the config.
gen-demand
    Sample a synthetic population to CSV.
gen-paths
    Generate route sets for O-D pairs to CSV.
plot
    Recompute KPIs and charts from a previously written episodes.csv.

The ``ROUTESIM_LOG`` environment variable (error, info or debug) controls
log verbosity. Relative network and demand paths inside a config file are
resolved against the config file's directory.
"""
from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import networks
from .demand import DemandConfig, generate_demand, load_demand, write_demand_csv
from .humans import MODELS, HumanModelParams, write_beliefs_csv
from .learners import LEARNER_KINDS, TrainSchedule, evaluate, save_policies, train
from .marlenv import (
    POST_MUTATION_MODES,
    EnvConfig,
    MutationSpec,
    RouteGenParams,
    TrafficEnvironment,
    child_seed,
    run_human_episode,
)
from .netgraph import load_network
from .pathgen import generate_routes, write_routes_csv
from .recorder import render_charts, write_kpis_json
from .traffic import BprModel, PointQueueModel

log = logging.getLogger("routesim")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ValueError):
    """A configuration problem, always naming the offending field."""


@dataclass
class ExperimentConfig:
    """Everything one run needs: environment, learner, budgets, output."""

    env: EnvConfig
    learner: str = "iql"
    schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(episodes=500))
    test_episodes: int = 100
    output_dir: str = "out"


def _ensure(condition: bool, fieldname: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{fieldname}: {message}")


def _number(raw, fieldname: str, minimum=None, maximum=None) -> float:
    _ensure(isinstance(raw, (int, float)) and not isinstance(raw, bool), fieldname, "must be a number")
    value = float(raw)
    if minimum is not None:
        _ensure(value >= minimum, fieldname, f"must be >= {minimum}")
    if maximum is not None:
        _ensure(value <= maximum, fieldname, f"must be <= {maximum}")
    return value


def _integer(raw, fieldname: str, minimum=None) -> int:
    _ensure(isinstance(raw, int) and not isinstance(raw, bool), fieldname, "must be an integer")
    if minimum is not None:
        _ensure(raw >= minimum, fieldname, f"must be >= {minimum}")
    return raw


def _section(raw: dict, name: str, allowed: tuple[str, ...]) -> dict:
    section = raw.get(name, {})
    if section is None:
        section = {}
    _ensure(isinstance(section, dict), name, "must be a mapping")
    for key in section:
        _ensure(key in allowed, f"{name}.{key}", "unknown field")
    return section


def resolve_network(reference: str, base_dir: Path) -> Path:
    """Turn a config network reference into a real file path.

    ``bundled:NAME`` refers to a packaged network; anything else is a file
    path, resolved against ``base_dir`` when relative.
    """
    if reference.startswith("bundled:"):
        try:
            return networks.bundled_path(reference.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"network: {exc}") from None
    path = Path(reference)
    if not path.is_absolute():
        path = base_dir / path
    return path


TOP_LEVEL_FIELDS = (
    "network",
    "demand",
    "routes",
    "traffic",
    "human",
    "phases",
    "mutation",
    "post_mutation_humans",
    "time_mult_range",
    "learner",
    "seed",
    "output_dir",
)


def parse_experiment_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment config.

    Raises :class:`ConfigError` with the dotted name of the first offending
    field. ``seed_override`` replaces the master seed before derived seeds
    (for example the demand seed) are computed, which is how replications
    get independent but reproducible streams.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: no such file {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: invalid YAML in {path}: {exc}") from None
    _ensure(isinstance(raw, dict), "config", "top level must be a mapping")
    for key in raw:
        _ensure(key in TOP_LEVEL_FIELDS, key, "unknown field")
    base_dir = path.parent

    seed = _integer(raw.get("seed", 0), "seed", minimum=0)
    if seed_override is not None:
        seed = seed_override

    _ensure("network" in raw, "network", "is required")
    _ensure(isinstance(raw["network"], str), "network", "must be a string")
    network_path = resolve_network(raw["network"], base_dir)
    _ensure(network_path.is_file(), "network", f"no such file {network_path}")

    _ensure("demand" in raw, "demand", "is required")
    demand_section = _section(
        raw, "demand", ("csv", "n_agents", "od_pairs", "departure_window", "seed")
    )
    if "csv" in demand_section:
        for key in demand_section:
            _ensure(key == "csv", f"demand.{key}", "cannot be combined with demand.csv")
        _ensure(isinstance(demand_section["csv"], str), "demand.csv", "must be a string")
        csv_path = Path(demand_section["csv"])
        if not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        _ensure(csv_path.is_file(), "demand.csv", f"no such file {csv_path}")
        demand: DemandConfig | Path = csv_path
    else:
        _ensure("n_agents" in demand_section, "demand.n_agents", "is required")
        n_agents = _integer(demand_section["n_agents"], "demand.n_agents", minimum=1)
        _ensure("od_pairs" in demand_section, "demand.od_pairs", "is required")
        raw_pairs = demand_section["od_pairs"]
        _ensure(isinstance(raw_pairs, list) and raw_pairs, "demand.od_pairs", "must be a non-empty list")
        od_pairs = []
        for index, pair in enumerate(raw_pairs):
            fieldname = f"demand.od_pairs[{index}]"
            _ensure(isinstance(pair, list) and len(pair) in (2, 3), fieldname, "must be [origin, dest] or [origin, dest, weight]")
            origin, dest = pair[0], pair[1]
            _ensure(isinstance(origin, str) and isinstance(dest, str), fieldname, "origin and dest must be strings")
            weight = _number(pair[2], f"{fieldname}.weight", minimum=0.0) if len(pair) == 3 else 1.0
            od_pairs.append((origin, dest, weight))
        window_raw = demand_section.get("departure_window", [0, 3600])
        _ensure(
            isinstance(window_raw, list) and len(window_raw) == 2,
            "demand.departure_window",
            "must be [start, end]",
        )
        window = (
            _integer(window_raw[0], "demand.departure_window.start", minimum=0),
            _integer(window_raw[1], "demand.departure_window.end", minimum=0),
        )
        _ensure(window[0] <= window[1], "demand.departure_window", "start must be <= end")
        demand_seed = (
            _integer(demand_section["seed"], "demand.seed", minimum=0)
            if "seed" in demand_section
            else child_seed(seed, "demand")
        )
        demand = DemandConfig(n_agents, od_pairs, window, demand_seed)

    routes_section = _section(raw, "routes", ("k", "penalty", "max_detour"))
    routes = RouteGenParams(
        k=_integer(routes_section.get("k", 3), "routes.k", minimum=1),
        penalty=_number(routes_section.get("penalty", 1.3), "routes.penalty"),
        max_detour=_number(routes_section.get("max_detour", 2.0), "routes.max_detour", minimum=1.0),
    )
    _ensure(routes.penalty > 1.0, "routes.penalty", "must be > 1")

    traffic_section = _section(raw, "traffic", ("model", "alpha", "beta"))
    model_name = traffic_section.get("model", "bpr")
    _ensure(model_name in ("bpr", "pointqueue"), "traffic.model", "must be bpr or pointqueue")
    if model_name == "bpr":
        model: BprModel | PointQueueModel = BprModel(
            alpha=_number(traffic_section.get("alpha", 0.15), "traffic.alpha", minimum=0.0),
            beta=_number(traffic_section.get("beta", 4.0), "traffic.beta", minimum=1.0),
        )
    else:
        for key in traffic_section:
            _ensure(key == "model", f"traffic.{key}", "not a pointqueue parameter")
        model = PointQueueModel()

    human_section = _section(
        raw, "human", ("model", "learn_rate", "logit_scale", "discount", "time_mult")
    )
    human = HumanModelParams(
        model=human_section.get("model", "weighted_average"),
        learn_rate=_number(human_section.get("learn_rate", 0.2), "human.learn_rate"),
        logit_scale=_number(human_section.get("logit_scale", 0.1), "human.logit_scale", minimum=0.0),
        discount=_number(human_section.get("discount", 0.99), "human.discount"),
        time_mult=_number(human_section.get("time_mult", 1.0), "human.time_mult"),
    )
    _ensure(human.model in MODELS, "human.model", f"must be one of {', '.join(MODELS)}")
    _ensure(0 < human.learn_rate <= 1, "human.learn_rate", "must be in (0, 1]")
    _ensure(0 < human.discount <= 1, "human.discount", "must be in (0, 1]")
    _ensure(human.time_mult > 0, "human.time_mult", "must be > 0")

    phases_section = _section(raw, "phases", ("human_episodes", "train_episodes", "test_episodes"))
    human_episodes = _integer(phases_section.get("human_episodes", 100), "phases.human_episodes", minimum=0)
    train_episodes = _integer(phases_section.get("train_episodes", 500), "phases.train_episodes", minimum=1)
    test_episodes = _integer(phases_section.get("test_episodes", 100), "phases.test_episodes", minimum=1)

    mutation_section = _section(raw, "mutation", ("share", "agent_ids", "behavior"))
    _ensure(
        not ("share" in mutation_section and "agent_ids" in mutation_section),
        "mutation.share",
        "cannot be combined with mutation.agent_ids",
    )
    behavior = mutation_section.get("behavior", "selfish")
    _ensure(isinstance(behavior, str), "mutation.behavior", "must be a string")
    if "agent_ids" in mutation_section:
        ids_raw = mutation_section["agent_ids"]
        _ensure(isinstance(ids_raw, list), "mutation.agent_ids", "must be a list")
        agent_ids = [_integer(a, f"mutation.agent_ids[{i}]", minimum=0) for i, a in enumerate(ids_raw)]
        mutation = MutationSpec(agent_ids=agent_ids, behavior=behavior)
    else:
        share = _number(mutation_section.get("share", 0.0), "mutation.share", minimum=0.0, maximum=1.0)
        mutation = MutationSpec(share=share, behavior=behavior)

    post_mutation = raw.get("post_mutation_humans", "stochastic")
    _ensure(
        post_mutation in POST_MUTATION_MODES,
        "post_mutation_humans",
        f"must be one of {', '.join(POST_MUTATION_MODES)}",
    )

    time_mult_range = None
    if raw.get("time_mult_range") is not None:
        tmr = raw["time_mult_range"]
        _ensure(isinstance(tmr, list) and len(tmr) == 2, "time_mult_range", "must be [lo, hi]")
        lo = _number(tmr[0], "time_mult_range.lo")
        hi = _number(tmr[1], "time_mult_range.hi")
        _ensure(0 < lo <= hi, "time_mult_range", "must satisfy 0 < lo <= hi")
        time_mult_range = (lo, hi)

    learner_section = _section(raw, "learner", ("kind", "eps_start", "eps_end", "learn_rate"))
    learner_kind = learner_section.get("kind", "iql")
    _ensure(
        learner_kind in LEARNER_KINDS,
        "learner.kind",
        f"must be one of {', '.join(LEARNER_KINDS)}",
    )
    schedule = TrainSchedule(
        episodes=train_episodes,
        eps_start=_number(learner_section.get("eps_start", 1.0), "learner.eps_start", minimum=0.0, maximum=1.0),
        eps_end=_number(learner_section.get("eps_end", 0.05), "learner.eps_end", minimum=0.0, maximum=1.0),
        learn_rate=_number(learner_section.get("learn_rate", 0.1), "learner.learn_rate"),
    )
    _ensure(schedule.eps_end <= schedule.eps_start, "learner.eps_end", "must be <= learner.eps_start")
    _ensure(0 < schedule.learn_rate <= 1, "learner.learn_rate", "must be in (0, 1]")

    output_dir = raw.get("output_dir", "out")
    _ensure(isinstance(output_dir, str), "output_dir", "must be a string")

    env = EnvConfig(
        network=network_path,
        demand=demand,
        routes=routes,
        model=model,
        human=human,
        human_episodes=human_episodes,
        mutation=mutation,
        post_mutation_humans=post_mutation,
        time_mult_range=time_mult_range,
        seed=seed,
    )
    return ExperimentConfig(
        env=env,
        learner=learner_kind,
        schedule=schedule,
        test_episodes=test_episodes,
        output_dir=output_dir,
    )


def _prepare_out_dir(out_dir: Path) -> Path:
    if out_dir.exists():
        if not out_dir.is_dir():
            raise ConfigError(f"output_dir: {out_dir} exists and is not a directory")
        if any(out_dir.iterdir()):
            raise ConfigError(f"output_dir: {out_dir} is not empty; refusing to overwrite")
    else:
        out_dir.mkdir(parents=True)
    return out_dir


def run_experiment(cfg: ExperimentConfig, out_dir, config_src=None) -> dict:
    """Execute one full experiment and write every artifact into ``out_dir``.

    Returns a manifest dict with artifact paths and the test-phase summary.
    The output directory must be empty or absent.
    """
    out_dir = _prepare_out_dir(Path(out_dir))
    env = TrafficEnvironment.from_config(cfg.env)
    log.info("population: %d agents, %d O-D pairs", len(env.agent_ids), len(env._route_sets))
    for _ in range(cfg.env.human_episodes):
        run_human_episode(env)
    log.info("human stabilization done after %d episodes", cfg.env.human_episodes)
    mutated = env.mutation()
    log.info("mutated %d agents into vehicle agents (%s)", len(mutated), cfg.env.mutation.behavior)
    policies, trace = train(env, cfg.learner, cfg.schedule)
    log.info("training done: %d episodes with learner %s", cfg.schedule.episodes, cfg.learner)
    summary_eval = evaluate(env, policies, cfg.test_episodes)
    log.info("testing done: %d episodes", cfg.test_episodes)

    episodes_path, flows_path = env.recorder.flush(out_dir)
    kpis_path = write_kpis_json(env.recorder.summarize(), out_dir / "kpis.json")
    chart_paths = render_charts(env.recorder.summarize(), out_dir / "charts")
    beliefs_path = write_beliefs_csv(
        out_dir / "beliefs.csv", env.day, {aid: env.beliefs_of(aid) for aid in env.agent_ids}
    )
    policies_path = save_policies(policies, out_dir / "policies.csv")
    echoed = None
    if config_src is not None:
        echoed = out_dir / "config.yaml"
        shutil.copyfile(config_src, echoed)
    return {
        "out_dir": out_dir,
        "episodes": episodes_path,
        "flows": flows_path,
        "kpis": kpis_path,
        "charts": chart_paths,
        "beliefs": beliefs_path,
        "policies": policies_path,
        "config": echoed,
        "mutated": mutated,
        "trace": trace,
        "eval": summary_eval,
    }


def _print_manifest(manifest: dict) -> None:
    summary = manifest["eval"]
    print(f"run complete: {manifest['out_dir']}")
    print(f"  mutated agents: {len(manifest['mutated'])}")
    if summary.mean_tt_human is not None:
        print(f"  test mean travel time (human): {summary.mean_tt_human:.2f} s")
    if summary.mean_tt_av is not None:
        print(f"  test mean travel time (av):    {summary.mean_tt_av:.2f} s")
    print(f"  test mean travel time (all):   {summary.mean_tt_all:.2f} s")
    if summary.mean_reward_av is not None:
        print(f"  test mean reward (av):         {summary.mean_reward_av:.2f}")
    if summary.tt_ratio is not None:
        print(f"  human/av travel time ratio:    {summary.tt_ratio:.4f}")
    artifacts = [manifest["episodes"], manifest["flows"], manifest["kpis"], manifest["beliefs"], manifest["policies"]]
    artifacts.extend(manifest["charts"])
    if manifest["config"] is not None:
        artifacts.append(manifest["config"])
    for artifact in artifacts:
        print(f"  wrote {artifact}")


def _replication_worker(config_path: str, seed: int, out_dir: str) -> str:
    cfg = parse_experiment_config(config_path, seed_override=seed)
    run_experiment(cfg, Path(out_dir), Path(config_path))
    return out_dir


def _cmd_run(args) -> int:
    cfg = parse_experiment_config(args.config)
    out_root = Path(args.out) if args.out else Path(cfg.output_dir)
    if args.replications == 1 and not args.seeds:
        manifest = run_experiment(cfg, out_root, Path(args.config))
        _print_manifest(manifest)
        return 0
    seeds = args.seeds or [cfg.env.seed + i for i in range(args.replications)]
    if len(seeds) != args.replications:
        raise ConfigError(
            f"seeds: got {len(seeds)} values for {args.replications} replications"
        )
    _prepare_out_dir(out_root)
    jobs = [
        (str(args.config), seed, str(out_root / f"rep_{index:02d}_seed_{seed}"))
        for index, seed in enumerate(seeds)
    ]
    with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
        for done in pool.map(_replication_worker, *zip(*jobs)):
            print(f"replication complete: {done}")
    return 0


def _parse_od(raw: str) -> tuple[str, str, float]:
    parts = raw.split(":")
    if len(parts) == 2:
        return parts[0], parts[1], 1.0
    if len(parts) == 3:
        return parts[0], parts[1], float(parts[2])
    raise ConfigError(f"od: expected ORIGIN:DEST[:WEIGHT], got {raw!r}")


def _cmd_gen_demand(args) -> int:
    net = load_network(resolve_network(args.network, Path.cwd()))
    cfg = DemandConfig(
        n_agents=args.n,
        od_pairs=[_parse_od(od) for od in args.od],
        departure_window=(args.window[0], args.window[1]),
        seed=args.seed,
    )
    specs = generate_demand(net, cfg)
    out = write_demand_csv(specs, args.out)
    print(f"wrote {len(specs)} agents to {out}")
    return 0


def _cmd_gen_paths(args) -> int:
    net = load_network(resolve_network(args.network, Path.cwd()))
    route_sets = [
        generate_routes(net, origin, dest, k=args.k, penalty=args.penalty, max_detour=args.max_detour)
        for origin, dest, _weight in (_parse_od(od) for od in args.od)
    ]
    out = write_routes_csv(route_sets, args.out)
    total = sum(len(rs) for rs in route_sets)
    print(f"wrote {total} routes for {len(route_sets)} O-D pairs to {out}")
    return 0


def _cmd_plot(args) -> int:
    from .recorder import Recorder

    recorder = Recorder.load(args.episodes, args.flows)
    summary = recorder.summarize()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kpis_path = write_kpis_json(summary, out_dir / "kpis.json")
    chart_paths = render_charts(summary, out_dir / "charts")
    for artifact in [kpis_path, *chart_paths]:
        print(f"wrote {artifact}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routesim",
        description="Day-to-day route choice simulator with learning vehicle agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full experiment from a YAML config")
    p_run.add_argument("config", help="experiment config file")
    p_run.add_argument("--out", help="output directory (overrides config output_dir)")
    p_run.add_argument("--replications", type=int, default=1, help="number of isolated replications")
    p_run.add_argument("--seeds", type=int, nargs="+", help="master seed per replication")
    p_run.set_defaults(func=_cmd_run)

    p_dem = sub.add_parser("gen-demand", help="sample a synthetic population to CSV")
    p_dem.add_argument("--network", default="bundled:two_route", help="network file or bundled:NAME")
    p_dem.add_argument("--n", type=int, default=100, help="number of agents")
    p_dem.add_argument("--od", action="append", default=None, help="ORIGIN:DEST[:WEIGHT], repeatable")
    p_dem.add_argument("--window", type=int, nargs=2, default=[0, 3600], metavar=("START", "END"))
    p_dem.add_argument("--seed", type=int, default=0)
    p_dem.add_argument("--out", default="demand.csv")
    p_dem.set_defaults(func=_cmd_gen_demand)

    p_paths = sub.add_parser("gen-paths", help="generate route sets to CSV")
    p_paths.add_argument("--network", default="bundled:two_route", help="network file or bundled:NAME")
    p_paths.add_argument("--od", action="append", default=None, help="ORIGIN:DEST, repeatable")
    p_paths.add_argument("--k", type=int, default=3)
    p_paths.add_argument("--penalty", type=float, default=1.3)
    p_paths.add_argument("--max-detour", dest="max_detour", type=float, default=2.0)
    p_paths.add_argument("--out", default="routes.csv")
    p_paths.set_defaults(func=_cmd_gen_paths)

    p_plot = sub.add_parser("plot", help="recompute KPIs and charts from episodes.csv")
    p_plot.add_argument("--episodes", required=True, help="episodes.csv from a run")
    p_plot.add_argument("--flows", default=None, help="optional flows.csv")
    p_plot.add_argument("--out", default="plots", help="output directory")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    level_name = os.environ.get("ROUTESIM_LOG", "error").lower()
    if level_name not in LOG_LEVELS:
        print(f"error: ROUTESIM_LOG must be one of {', '.join(LOG_LEVELS)}", file=sys.stderr)
        return 2
    logging.basicConfig(level=LOG_LEVELS[level_name], format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-demand" or args.command == "gen-paths":
        if args.od is None:
            args.od = ["O:D"]
    try:
        return args.func(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
