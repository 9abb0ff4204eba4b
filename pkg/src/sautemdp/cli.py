"""Command-line entry point.

Subcommands:
  solve    value-iterate a tabular fixture and write the solved table
  verify   run a theorem-check suite (t1 | t2b | t3) against its oracles
  run      execute an experiment plan end to end, writing CSV + JSON + manifest
  export   re-export a results JSON as CSV
  bridge   serve a sauteed environment over line-delimited JSON on stdio

All behavior is driven by a single JSON config format (schema_version "1",
unknown keys rejected) plus a handful of flags: paths, --force, --dry-run,
--jobs. Exit codes are stable API: 0 ok, 2 config error, 3 convergence
failure, 4 verification failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agents import (
    CEMPlanConfig,
    LearnSchedules,
    PlannerPolicy,
    PlanObjective,
    StationaryGridPolicy,
    TabularSautePolicy,
    q_learn_on_env,
    train_lagrangian_patrol,
)
from .core import EnvironmentInterface
from .envs import GridworldEnv, PendulumEnv, PendulumParams, make_fixture, two_corridor_params
from .harness import (
    ExperimentPlan,
    ExperimentReport,
    evaluate_with_factories,
    export_results,
    load_report,
    report_csv,
)
from .saute import Fixed, ObjectiveMode, SauteConfig, SauteEnv, UniformInterval
from .solver import (
    ConvergenceError,
    build_saute_mdp,
    cmdp_to_dict,
    integer_z_grid,
    monotone_convergence_report,
    offset_z_grid,
    almost_sure_check,
    brute_force_safe_optimum,
    value_iteration,
)
from .envs.fixtures import random_deterministic_cmdp

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_VERIFY = 4
EXIT_IO = 5

SCHEMA_VERSION = "1"


class ConfigError(Exception):
    pass


def _require_keys(section: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {cfg.get('schema_version')!r}; expected {SCHEMA_VERSION!r}"
        )
    return cfg


# ---------------------------------------------------------------------------
# Section builders


def build_z_grid(section: dict, budget_d: float) -> np.ndarray:
    _require_keys(section, {"type", "lowest", "step", "nodes_below_zero"}, {"type"}, "z_grid")
    if section["type"] == "integer":
        return integer_z_grid(budget_d, lowest=int(section.get("lowest", -1)))
    if section["type"] == "offset":
        return offset_z_grid(
            budget_d,
            step=float(section["step"]),
            nodes_below_zero=int(section.get("nodes_below_zero", 1)),
        )
    raise ConfigError(f"unknown z_grid type {section['type']!r}")


def build_environment(section: dict) -> EnvironmentInterface:
    _require_keys(
        section,
        {"type", "budget_d", "horizon", "slip_probability", "gamma_c", "gamma_l"},
        {"type"},
        "environment",
    )
    kind = section["type"]
    if kind == "pendulum":
        overrides = {k: v for k, v in section.items() if k != "type"}
        return PendulumEnv(PendulumParams(**overrides))
    if kind == "two-corridor":
        params = two_corridor_params(
            budget_d=float(section.get("budget_d", 12.9)),
            horizon=int(section.get("horizon", 34)),
            slip_probability=float(section.get("slip_probability", 0.0)),
        )
        return GridworldEnv(params)
    raise ConfigError(f"unknown environment type {kind!r}")


def build_saute_config(section: dict) -> SauteConfig:
    _require_keys(
        section,
        {
            "budget_d",
            "gamma_l",
            "reshape_n",
            "normalize",
            "mode",
            "cost_shaping",
            "budget_sampling",
        },
        {"budget_d", "gamma_l", "reshape_n"},
        "saute",
    )
    sampling = None
    if "budget_sampling" in section:
        samp = section["budget_sampling"]
        _require_keys(samp, {"type", "d", "lower", "upper"}, {"type"}, "saute.budget_sampling")
        if samp["type"] == "fixed":
            sampling = Fixed(float(samp["d"]))
        elif samp["type"] == "uniform":
            sampling = UniformInterval(float(samp["lower"]), float(samp["upper"]))
        else:
            raise ConfigError(f"unknown budget_sampling type {samp['type']!r}")
    mode = ObjectiveMode(section.get("mode", "minimize_cost"))
    return SauteConfig(
        budget_d=float(section["budget_d"]),
        gamma_l=float(section["gamma_l"]),
        reshape_n=float(section["reshape_n"]),
        normalize=bool(section.get("normalize", True)),
        budget_sampling=sampling,
        mode=mode,
        cost_shaping=bool(section.get("cost_shaping", True)),
    )


def _schedules(section: dict) -> LearnSchedules:
    allowed = {"epsilon_start", "epsilon_end", "alpha_start", "alpha_end", "decay_fraction"}
    _require_keys(section, allowed, set(), "agent.schedules")
    return LearnSchedules(**{k: float(v) for k, v in section.items()})


def build_agent_factory(cfg: dict):
    """Returns make_pair() -> (agent, env) plus a description for manifests.

    Training-type agents (tabular Q, the dual-ascent baseline) train once
    up front from the config's master seed; planner agents are stateless
    per pair.
    """
    env_section = cfg["environment"]
    agent = cfg["agent"]
    master_seed = int(cfg["master_seed"])
    saute_section = cfg.get("saute")

    def make_saute_env() -> SauteEnv:
        if saute_section is None:
            raise ConfigError("this agent type requires a saute section")
        return SauteEnv(build_environment(env_section), build_saute_config(saute_section))

    kind = agent.get("type")
    if kind == "cem":
        allowed = {
            "type",
            "plan_horizon",
            "population",
            "elite_fraction",
            "iterations",
            "initial_stddev",
            "min_stddev",
            "replan_every",
            "objective",
            "risk_floor",
        }
        _require_keys(agent, allowed, {"type", "plan_horizon"}, "agent")
        objective = PlanObjective(agent.get("objective", "shaped"))
        risk_floor = float(agent.get("risk_floor", 0.0))
        plan_cfg = CEMPlanConfig(
            plan_horizon=int(agent["plan_horizon"]),
            population=int(agent.get("population", 150)),
            elite_fraction=float(agent.get("elite_fraction", 0.1)),
            iterations=int(agent.get("iterations", 4)),
            initial_stddev=float(agent.get("initial_stddev", 1.0)),
            min_stddev=float(agent.get("min_stddev", 0.05)),
            replan_every=int(agent.get("replan_every", 1)),
        )

        def make_pair():
            env = make_saute_env()
            policy = PlannerPolicy(env, plan_cfg, objective, risk_floor=risk_floor)
            return policy, env

        return make_pair

    if kind == "tabular-q":
        allowed = {
            "type",
            "episodes",
            "schedules",
            "z_grid",
            "learn_gamma",
            "q_init",
            "train_seed_offset",
        }
        _require_keys(agent, allowed, {"type", "episodes", "z_grid"}, "agent")
        saute_cfg = build_saute_config(cfg["saute"])
        probe_env = build_environment(env_section)
        if not hasattr(probe_env, "state_index"):
            raise ConfigError("tabular-q requires an environment with discrete state indices")
        grid = build_z_grid(agent["z_grid"], 1.0 if saute_cfg.normalize else saute_cfg.budget_d)
        schedules = _schedules(agent.get("schedules", {}))
        table = q_learn_on_env(
            lambda: SauteEnv(build_environment(env_section), saute_cfg),
            num_states=probe_env.params.num_cells,
            num_actions=4,
            z_grid=grid,
            episodes=int(agent["episodes"]),
            schedules=schedules,
            seed=master_seed + int(agent.get("train_seed_offset", 1)),
            maximize=saute_cfg.mode is ObjectiveMode.MAXIMIZE_REWARD,
            learn_gamma=float(agent["learn_gamma"]) if "learn_gamma" in agent else None,
            q_init=float(agent.get("q_init", 0.0)),
        )

        def make_pair():
            env = make_saute_env()
            return TabularSautePolicy(table, env), env

        return make_pair

    if kind == "lagrangian":
        allowed = {"type", "iterations", "batch_episodes", "penalty_lr", "initial_penalty", "solver_gamma"}
        _require_keys(agent, allowed, {"type", "iterations", "batch_episodes"}, "agent")
        result = train_lagrangian_patrol(
            lambda: build_environment(env_section),
            iterations=int(agent["iterations"]),
            batch_episodes=int(agent["batch_episodes"]),
            seed=master_seed + 1,
            penalty_lr=float(agent.get("penalty_lr", 5e-2)),
            initial_penalty=float(agent.get("initial_penalty", 1.0)),
            solver_gamma=float(agent.get("solver_gamma", 0.99)),
        )

        def make_pair():
            env = build_environment(env_section)
            return StationaryGridPolicy(result.tables, env.params.width), env

        return make_pair

    raise ConfigError(f"unknown agent type {kind!r}")


# ---------------------------------------------------------------------------
# Subcommands


def _refuse_existing(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    allowed = {
        "schema_version",
        "kind",
        "fixture",
        "reshape_n",
        "z_grid",
        "interpolation",
        "tol",
        "max_iters",
        "horizon",
    }
    _require_keys(cfg, allowed, {"schema_version", "fixture", "reshape_n", "z_grid"}, "solve config")
    cmdp = make_fixture(cfg["fixture"])
    grid = build_z_grid(cfg["z_grid"], cmdp.budget_d)
    mdp = build_saute_mdp(
        cmdp, grid, n=float(cfg["reshape_n"]), interpolation=cfg.get("interpolation", "nearest")
    )
    out = Path(args.out)
    _refuse_existing(out, args.force)
    table = value_iteration(
        mdp,
        tol=float(cfg.get("tol", 1e-10)),
        max_iters=int(cfg.get("max_iters", 100_000)),
        horizon=cfg.get("horizon"),
    )
    payload = {
        "fixture": cfg["fixture"],
        "reshape_n": float(cfg["reshape_n"]),
        "z_grid": [float(z) for z in grid],
        "values": table.values.tolist(),
        "policy": table.policy.tolist(),
        "residual": table.residual,
        "iterations": table.iterations,
        "engine_version": __version__,
    }
    out.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    print(f"solved {cfg['fixture']}: residual {table.residual:.3e} after {table.iterations} sweeps")
    print(f"wrote {out}")
    return EXIT_OK


def verify_t1(section: dict) -> tuple[bool, list[str]]:
    instances = int(section.get("instances", 20))
    base_seed = int(section.get("master_seed", 0))
    n = float(section.get("reshape_n", 1e6))
    lines = []
    ok = True
    for k in range(instances):
        cmdp = random_deterministic_cmdp(base_seed + k)
        oracle = brute_force_safe_optimum(cmdp, cmdp.horizon)
        mdp = build_saute_mdp(cmdp, integer_z_grid(cmdp.budget_d), n=n)
        table = value_iteration(mdp, horizon=cmdp.horizon)
        value = table.values[cmdp.initial_state, mdp.initial_z_index]
        floor = n * cmdp.gamma_c ** (cmdp.horizon - 1) * 0.5
        if oracle.feasible:
            good = abs(value - oracle.best_cost) <= 1e-9 and value < floor
            lines.append(
                f"instance {k}: feasible, |vi - oracle| = {abs(value - oracle.best_cost):.2e}"
            )
        else:
            good = value >= floor
            lines.append(f"instance {k}: infeasible, penalty floor check {'ok' if good else 'FAIL'}")
        if not good:
            lines.append("offending instance: " + json.dumps(cmdp_to_dict(cmdp)))
        ok = ok and good
    return ok, lines


def verify_t2b(section: dict) -> tuple[bool, list[str]]:
    fixtures = section.get("fixtures", ["risky-chain", "two-corridor", "tiny-random(7)"])
    n_list = [float(x) for x in section.get("n_list", [0, 1, 10, 100, 1000])]
    lines = []
    ok = True
    for name in fixtures:
        cmdp = make_fixture(name)
        step = float(section.get("grid_step", 1.0)) if name != "two-corridor" else 0.2
        grid = (
            integer_z_grid(cmdp.budget_d)
            if name != "two-corridor"
            else offset_z_grid(cmdp.budget_d, step, nodes_below_zero=2)
        )
        rep = monotone_convergence_report(cmdp, grid, n_list)
        good = rep.monotone_ok and rep.gap_nonincreasing
        gaps = ", ".join(f"{g:.4g}" for g in rep.gaps)
        lines.append(f"{name}: monotone={rep.monotone_ok} gaps=[{gaps}]")
        if rep.first_violation is not None:
            lines.append(f"  first violation at (n_index, state, z_node) = {rep.first_violation}")
        if not good:
            lines.append("offending instance: " + json.dumps(cmdp_to_dict(cmdp)))
        ok = ok and good
    return ok, lines


def verify_t3(section: dict) -> tuple[bool, list[str]]:
    """Zero violations required of the checked policy. The "random" policy
    option exists as a negative control: it should make the check fail."""
    fixtures = section.get("fixtures", ["risky-chain", "tiny-random(7)"])
    episodes = int(section.get("episodes", 1000))
    seed = int(section.get("seed", 2024))
    n = float(section.get("reshape_n", 1000.0))
    policy_kind = section.get("policy", "greedy")
    lines = []
    ok = True
    for name in fixtures:
        cmdp = make_fixture(name)
        mdp = build_saute_mdp(cmdp, integer_z_grid(cmdp.budget_d), n=n)
        if policy_kind == "greedy":
            table = value_iteration(mdp, tol=1e-10)
            policy = table.policy
        elif policy_kind == "random":
            rng = np.random.default_rng(seed)
            policy = rng.integers(0, cmdp.num_actions, size=(cmdp.num_states, mdp.num_z))
        else:
            raise ConfigError(f"unknown t3 policy {policy_kind!r}")
        violations = almost_sure_check(mdp, policy, episodes, seed)
        lines.append(f"{name} ({policy_kind}): {violations}/{episodes} violations")
        if violations != 0:
            lines.append("offending instance: " + json.dumps(cmdp_to_dict(cmdp)))
        ok = ok and violations == 0
    return ok, lines


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    allowed = {"schema_version", "kind", "t1", "t2b", "t3"}
    _require_keys(cfg, allowed, {"schema_version"}, "verify config")
    section = cfg.get(args.theorem, {})
    runner = {"t1": verify_t1, "t2b": verify_t2b, "t3": verify_t3}[args.theorem]
    ok, lines = runner(section)
    for line in lines:
        print(line)
    print(f"{args.theorem}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    allowed = {"schema_version", "kind", "master_seed", "environment", "saute", "agent", "eval"}
    _require_keys(cfg, allowed, {"schema_version", "master_seed", "environment", "agent", "eval"}, "run config")
    eval_section = cfg["eval"]
    _require_keys(
        eval_section,
        {"n_seeds", "n_eval_trajectories", "task_divisor", "label"},
        set(),
        "eval",
    )
    plan = ExperimentPlan(
        n_seeds=int(eval_section.get("n_seeds", 5)),
        n_eval_trajectories=int(eval_section.get("n_eval_trajectories", 100)),
        master_seed=int(cfg["master_seed"]),
        task_divisor=float(eval_section.get("task_divisor", 1.0)),
    )
    out_dir = Path(args.out)
    if args.dry_run:
        build_agent_factory(cfg)  # validates all sections
        print(json.dumps({"plan": {"n_seeds": plan.n_seeds, "n_eval_trajectories": plan.n_eval_trajectories, "master_seed": plan.master_seed}, "out": str(out_dir)}, indent=2))
        print("dry run ok")
        return EXIT_OK
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    json_path = out_dir / "results.json"
    manifest_path = out_dir / "manifest.json"
    for p in (csv_path, json_path, manifest_path):
        _refuse_existing(p, args.force)
    failed_marker = out_dir / "FAILED"
    try:
        make_pair = build_agent_factory(cfg)
        label = eval_section.get("label", "run")
        report = ExperimentReport(
            cells=(
                evaluate_with_factories(make_pair, plan, label=label, jobs=args.jobs),
            )
        )
        export_results(report, "csv", csv_path)
        export_results(report, "json", json_path)
        digest = hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode("utf-8")
        ).hexdigest()
        manifest = {
            "config_sha256": digest,
            "master_seed": plan.master_seed,
            "engine_version": __version__,
            "numpy_version": np.__version__,
            "outputs": ["results.csv", "results.json"],
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        if failed_marker.exists():
            failed_marker.unlink()
        cell = report.cells[0]
        print(
            f"{label}: {len(cell.rows)} trajectories, violation_fraction "
            f"{cell.stats.violation_fraction:.4f}, median task return "
            f"{cell.stats.task_return.median:.6g}"
        )
        print(f"wrote {csv_path}, {json_path}, {manifest_path}")
        return EXIT_OK
    except Exception:
        failed_marker.write_text("run failed; partial results may be present\n", encoding="utf-8")
        raise


def cmd_export(args) -> int:
    report = load_report(args.results)
    out = Path(args.out)
    _refuse_existing(out, args.force)
    if args.format == "csv":
        out.write_text(report_csv(report), encoding="utf-8", newline="")
    else:
        export_results(report, "json", out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_bridge(args) -> int:
    from .bridge import serve

    cfg = load_config(args.config)
    allowed = {"schema_version", "kind", "environment", "saute"}
    _require_keys(cfg, allowed, {"schema_version", "environment", "saute"}, "bridge config")

    def make_env() -> SauteEnv:
        return SauteEnv(build_environment(cfg["environment"]), build_saute_config(cfg["saute"]))

    serve(make_env, sys.stdin, sys.stdout)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sautemdp", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sautemdp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="value-iterate a tabular fixture")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", required=True)
    p_solve.add_argument("--force", action="store_true")
    p_solve.set_defaults(func=cmd_solve)

    p_verify = sub.add_parser("verify", help="run a theorem-check suite")
    p_verify.add_argument("theorem", choices=["t1", "t2b", "t3"])
    p_verify.add_argument("--config", required=True)
    p_verify.set_defaults(func=cmd_verify)

    p_run = sub.add_parser("run", help="execute an experiment plan")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--force", action="store_true")
    p_run.add_argument("--dry-run", action="store_true")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_export = sub.add_parser("export", help="re-export results JSON")
    p_export.add_argument("--results", required=True)
    p_export.add_argument("--format", choices=["csv", "json"], default="csv")
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--force", action="store_true")
    p_export.set_defaults(func=cmd_export)

    p_bridge = sub.add_parser("bridge", help="serve a sauteed environment on stdio")
    p_bridge.add_argument("--config", required=True)
    p_bridge.set_defaults(func=cmd_bridge)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (FileExistsError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
