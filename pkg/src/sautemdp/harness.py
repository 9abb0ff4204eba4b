"""Seeded experiment protocol: multi-trajectory evaluation, box-plot style
distributional summaries, budget-generalization matrices, ablation sweeps,
and stable CSV/JSON export.

Every trajectory's seed derives deterministically from (master_seed,
seed_index, trajectory_index), so any cell of any report reproduces in
isolation and aggregation is order-independent. Task metrics always use
the raw (unshaped) task signal; safety metrics use the discounted safety
sum; violation means exceeding the budget in force for the episode.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import numpy as np

from .core import EnvironmentInterface, PolicyInterface, TrajectoryRecord, rollout

__all__ = [
    "MetricSummary",
    "EvalStats",
    "TrajectoryMetrics",
    "EvalReport",
    "ExperimentReport",
    "ExperimentPlan",
    "summarize",
    "trajectory_seed",
    "evaluate",
    "budget_generalization",
    "ablation_sweep",
    "export_results",
    "load_report",
]


@dataclass(frozen=True)
class MetricSummary:
    """Box-plot style five-number summary plus mean and outliers.

    Quartiles use linear interpolation between closest ranks. Whisker
    fences sit 1.5 IQR beyond the quartiles, truncated to the data range;
    points strictly outside the fences are outliers.
    """

    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    mean: float
    count: int
    outliers: tuple[float, ...] = ()


def summarize(values: Iterable[float]) -> MetricSummary:
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise ValueError("cannot summarize an empty sample")
    q1, median, q3 = np.percentile(data, [25.0, 50.0, 75.0], method="linear")
    iqr = q3 - q1
    fence_low = q1 - 1.5 * iqr
    fence_high = q3 + 1.5 * iqr
    whisker_low = max(fence_low, float(data.min()))
    whisker_high = min(fence_high, float(data.max()))
    outliers = data[(data < fence_low) | (data > fence_high)]
    return MetricSummary(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(whisker_low),
        whisker_high=float(whisker_high),
        mean=float(data.mean()),
        count=int(data.size),
        outliers=tuple(float(x) for x in np.sort(outliers)),
    )


@dataclass(frozen=True)
class EvalStats:
    task_return: MetricSummary
    safety_total: MetricSummary
    max_step_z_deficit: MetricSummary
    violation_fraction: float
    max_safety_total: float
    # Constraint-violating steps over total steps; an artifact-level
    # definition (a step violates when the discounted safety sum so far
    # exceeds the budget).
    cost_rate: float


@dataclass(frozen=True)
class TrajectoryMetrics:
    seed_index: int
    trajectory_index: int
    trajectory_seed: int
    task_return: float
    safety_total: float
    max_step_z_deficit: float
    violated: bool
    steps: int


@dataclass(frozen=True)
class EvalReport:
    """One evaluated cell: distributional stats plus per-trajectory rows."""

    label: str
    budget_d: float
    stats: EvalStats
    rows: tuple[TrajectoryMetrics, ...]
    task_divisor: float = 1.0


@dataclass(frozen=True)
class ExperimentReport:
    cells: tuple[EvalReport, ...]

    def cell(self, label: str) -> EvalReport:
        for c in self.cells:
            if c.label == label:
                return c
        raise KeyError(label)


@dataclass(frozen=True)
class ExperimentPlan:
    """Evaluation protocol knobs.

    The default five seeds with one hundred trajectories each follow the
    engine's standard protocol; sampling-heavy planners may override
    n_eval_trajectories downward per plan.
    """

    n_seeds: int = 5
    n_eval_trajectories: int = 100
    master_seed: int = 0
    task_divisor: float = 1.0

    def __post_init__(self):
        if self.n_seeds < 1 or self.n_eval_trajectories < 1:
            raise ValueError("n_seeds and n_eval_trajectories must be >= 1")


def trajectory_seed(master_seed: int, seed_index: int, trajectory_index: int) -> int:
    """Stable per-trajectory seed; independent across all three indices."""
    ss = np.random.SeedSequence([master_seed, seed_index, trajectory_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _trajectory_metrics(
    record: TrajectoryRecord,
    budget_d: float,
    gamma_c: float,
    gamma_l: float,
    seed_index: int,
    trajectory_index: int,
    seed: int,
) -> TrajectoryMetrics:
    raw_costs = record.raw_task_costs
    discounts = gamma_c ** np.arange(len(raw_costs))
    task_return = float(raw_costs @ discounts)

    safety = record.safety_costs
    discounts_l = gamma_l ** np.arange(len(safety))
    partial = np.cumsum(discounts_l * safety)
    safety_total = float(partial[-1]) if len(partial) else 0.0
    deficit = float(np.max(np.maximum(partial - budget_d, 0.0) / budget_d)) if budget_d > 0 and len(partial) else 0.0
    return TrajectoryMetrics(
        seed_index=seed_index,
        trajectory_index=trajectory_index,
        trajectory_seed=seed,
        task_return=task_return,
        safety_total=safety_total,
        max_step_z_deficit=deficit,
        violated=bool(safety_total > budget_d),
        steps=len(record),
    )


def _stats_from_rows(rows: list[TrajectoryMetrics], budget_d: float, total_violating_steps: int, total_steps: int) -> EvalStats:
    return EvalStats(
        task_return=summarize(r.task_return for r in rows),
        safety_total=summarize(r.safety_total for r in rows),
        max_step_z_deficit=summarize(r.max_step_z_deficit for r in rows),
        violation_fraction=float(np.mean([r.violated for r in rows])),
        max_safety_total=float(max(r.safety_total for r in rows)),
        cost_rate=total_violating_steps / total_steps if total_steps else 0.0,
    )


def evaluate(
    agent: PolicyInterface,
    env: EnvironmentInterface,
    plan: ExperimentPlan,
    label: str = "eval",
    budget_d: float | None = None,
) -> EvalReport:
    """Run the full seeded protocol for one (agent, environment) cell.

    n_seeds x n_eval_trajectories rollouts, each on its own derived seed.
    Raised rollout errors are annotated with the (seed, trajectory)
    coordinates that produced them.
    """
    spec = env.spec
    d = spec.budget_d if budget_d is None else budget_d
    rows: list[TrajectoryMetrics] = []
    violating_steps = 0
    total_steps = 0
    for i in range(plan.n_seeds):
        for j in range(plan.n_eval_trajectories):
            seed = trajectory_seed(plan.master_seed, i, j)
            try:
                record = rollout(env, agent, spec.horizon, seed)
            except Exception as exc:
                exc.args = (f"seed {i}, trajectory {j}: {exc}",)
                raise
            row = _trajectory_metrics(record, d, spec.gamma_c, spec.gamma_l, i, j, seed)
            rows.append(row)
            safety = record.safety_costs
            partial = np.cumsum(spec.gamma_l ** np.arange(len(safety)) * safety)
            violating_steps += int(np.sum(partial > d))
            total_steps += len(record)
    stats = _stats_from_rows(rows, d, violating_steps, total_steps)
    return EvalReport(
        label=label,
        budget_d=d,
        stats=stats,
        rows=tuple(rows),
        task_divisor=plan.task_divisor,
    )


def evaluate_with_factories(
    make_pair: Callable[[], tuple[PolicyInterface, EnvironmentInterface]],
    plan: ExperimentPlan,
    label: str = "eval",
    budget_d: float | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Protocol run with bounded parallel trajectory contexts.

    Each worker task builds its own (agent, environment) pair, honoring the
    single-context contract. Rows are keyed by (seed, trajectory) index, so
    the report is identical for any job count.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if jobs == 1:
        agent, env = make_pair()
        return evaluate(agent, env, plan, label=label, budget_d=budget_d)

    probe_env = make_pair()[1]
    spec = probe_env.spec
    d = spec.budget_d if budget_d is None else budget_d
    coords = [
        (i, j) for i in range(plan.n_seeds) for j in range(plan.n_eval_trajectories)
    ]

    def run_one(coord: tuple[int, int]):
        i, j = coord
        agent, env = make_pair()
        seed = trajectory_seed(plan.master_seed, i, j)
        record = rollout(env, agent, spec.horizon, seed)
        row = _trajectory_metrics(record, d, spec.gamma_c, spec.gamma_l, i, j, seed)
        safety = record.safety_costs
        partial = np.cumsum(spec.gamma_l ** np.arange(len(safety)) * safety)
        return row, int(np.sum(partial > d)), len(record)

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(run_one, coords))
    rows = [r for r, _, _ in results]
    violating_steps = sum(v for _, v, _ in results)
    total_steps = sum(n for _, _, n in results)
    stats = _stats_from_rows(rows, d, violating_steps, total_steps)
    return EvalReport(
        label=label, budget_d=d, stats=stats, rows=tuple(rows), task_divisor=plan.task_divisor
    )


def budget_generalization(
    train_agent: Callable[[object], object],
    bind_agent: Callable[[object, EnvironmentInterface], PolicyInterface],
    env_at_budget: Callable[[float], EnvironmentInterface],
    eval_budgets: list[float],
    naive_budget: float,
    meta_spec: object,
    plan: ExperimentPlan,
) -> ExperimentReport:
    """Train baseline / naive / meta agents and evaluate all across budgets.

    * baseline: one agent per evaluation budget, trained at that budget;
    * naive: one agent trained at naive_budget, evaluated everywhere;
    * meta: one agent trained with the sampled-budget spec.

    Normalized safety states make the evaluation budget a pure config
    change: the same tabular policy binds to each budget's environment.
    Cell labels are "<role>@<budget>".
    """
    if any(b <= 0 for b in eval_budgets):
        raise ValueError("evaluation budgets must be positive")
    artifacts = {"naive": train_agent(naive_budget), "meta": train_agent(meta_spec)}
    cells: list[EvalReport] = []
    for b in eval_budgets:
        baseline = train_agent(b)
        for role, artifact in (("baseline", baseline), ("naive", artifacts["naive"]), ("meta", artifacts["meta"])):
            env = env_at_budget(b)
            agent = bind_agent(artifact, env)
            cells.append(evaluate(agent, env, plan, label=f"{role}@{b:g}", budget_d=b))
    return ExperimentReport(cells=tuple(cells))


def ablation_sweep(
    make_cell: Callable[[str], tuple[PolicyInterface, EnvironmentInterface]],
    plan: ExperimentPlan,
    no_sa: bool = True,
    no_cs: bool = True,
    n_sweep: tuple[float, ...] = (),
) -> ExperimentReport:
    """Evaluate the ablation matrix.

    make_cell(label) builds the (agent, environment) pair for each cell:
    "full", "no_SA" (the policy sees the unaugmented observation), "no_CS"
    (cost shaping disabled, z still tracked), and "n=<value>" for each
    penalty in the sweep.
    """
    labels = ["full"]
    if no_sa:
        labels.append("no_SA")
    if no_cs:
        labels.append("no_CS")
    labels.extend(f"n={n:g}" for n in n_sweep)
    if len(labels) == 1:
        raise ValueError("at least one ablation switch must be active")
    cells = []
    for label in labels:
        agent, env = make_cell(label)
        cells.append(evaluate(agent, env, plan, label=label))
    return ExperimentReport(cells=tuple(cells))


# ---------------------------------------------------------------------------
# Export. Floats are serialized with 17 significant digits so exported
# values round-trip bit-exactly.

_CSV_COLUMNS = (
    "cell",
    "seed_index",
    "trajectory_index",
    "trajectory_seed",
    "task_return",
    "safety_total",
    "max_step_z_deficit",
    "violated",
    "steps",
    "task_return_norm",
    "safety_total_norm",
)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for cell in report.cells:
        for r in cell.rows:
            writer.writerow(
                (
                    cell.label,
                    r.seed_index,
                    r.trajectory_index,
                    r.trajectory_seed,
                    _fmt(r.task_return),
                    _fmt(r.safety_total),
                    _fmt(r.max_step_z_deficit),
                    int(r.violated),
                    r.steps,
                    _fmt(r.task_return / cell.task_divisor),
                    _fmt(r.safety_total / cell.budget_d if cell.budget_d > 0 else r.safety_total),
                )
            )
    return buf.getvalue()


def report_json_dict(report: ExperimentReport) -> dict:
    def summary_dict(s: MetricSummary) -> dict:
        d = asdict(s)
        d["outliers"] = list(s.outliers)
        return d

    return {
        "cells": [
            {
                "label": c.label,
                "budget_d": c.budget_d,
                "task_divisor": c.task_divisor,
                "stats": {
                    "task_return": summary_dict(c.stats.task_return),
                    "safety_total": summary_dict(c.stats.safety_total),
                    "max_step_z_deficit": summary_dict(c.stats.max_step_z_deficit),
                    "violation_fraction": c.stats.violation_fraction,
                    "max_safety_total": c.stats.max_safety_total,
                    "cost_rate": c.stats.cost_rate,
                },
                "rows": [asdict(r) for r in c.rows],
            }
            for c in report.cells
        ]
    }


def export_results(report: ExperimentReport, fmt: str, path) -> None:
    """Write a report as CSV (per-trajectory rows, fixed column order) or
    JSON (stats plus rows, bit-exact float round-trip)."""
    if fmt.lower() == "csv":
        payload = report_csv(report)
    elif fmt.lower() == "json":
        payload = json.dumps(report_json_dict(report), indent=2, sort_keys=True)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def load_report(path) -> ExperimentReport:
    """Rebuild an ExperimentReport from its JSON export."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    cells = []
    for c in payload["cells"]:
        stats = EvalStats(
            task_return=MetricSummary(**{**c["stats"]["task_return"], "outliers": tuple(c["stats"]["task_return"]["outliers"])}),
            safety_total=MetricSummary(**{**c["stats"]["safety_total"], "outliers": tuple(c["stats"]["safety_total"]["outliers"])}),
            max_step_z_deficit=MetricSummary(**{**c["stats"]["max_step_z_deficit"], "outliers": tuple(c["stats"]["max_step_z_deficit"]["outliers"])}),
            violation_fraction=c["stats"]["violation_fraction"],
            max_safety_total=c["stats"]["max_safety_total"],
            cost_rate=c["stats"]["cost_rate"],
        )
        rows = tuple(TrajectoryMetrics(**r) for r in c["rows"])
        cells.append(
            EvalReport(
                label=c["label"],
                budget_d=c["budget_d"],
                stats=stats,
                rows=rows,
                task_divisor=c["task_divisor"],
            )
        )
    return ExperimentReport(cells=tuple(cells))
