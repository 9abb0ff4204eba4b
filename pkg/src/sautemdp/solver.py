"""Tabular solvers and oracles for budget-augmented finite MDPs.

The augmented state space is the product of the base states with a sorted
grid of safety-state nodes. The safety state evolves unnormalized,
z' = (z - l(s, a)) / gamma_l, and the per-step cost is shaped with the
post-update z': task cost while z' >= 0, the constant penalty n once
z' < 0. Values of z' below the lowest grid node are absorbed into the
lowest node (once negative, the shaped cost no longer depends on depth);
values above the highest node are absorbed into the highest node.

Solvers:
  * value_iteration       - stationary fixed point (gamma_c < 1) or exact
                            finite-horizon backward induction;
  * brute_force_safe_optimum - exhaustive enumeration oracle on
                            deterministic instances;
  * hard_constrained_values  - the infinite-penalty limit, computed by
                            feasibility-constrained backward induction;
  * monotone_convergence_report - pointwise monotonicity of the penalty
                            family and its gap to the hard-constrained limit;
  * almost_sure_check     - Monte-Carlo violation counting for a policy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import derive_seeds, make_generator

__all__ = [
    "FiniteCMDP",
    "FiniteSauteMDP",
    "ValueTable",
    "Interpolation",
    "BruteForceResult",
    "build_saute_mdp",
    "value_iteration",
    "brute_force_safe_optimum",
    "hard_constrained_values",
    "monotone_convergence_report",
    "MonotoneReport",
    "almost_sure_check",
    "integer_z_grid",
    "offset_z_grid",
    "cmdp_to_dict",
    "cmdp_from_dict",
    "ConvergenceError",
]

NEAREST = "nearest"
LINEAR = "linear"
Interpolation = str


class ConvergenceError(Exception):
    """Value iteration failed to reach the residual tolerance."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"no convergence after {iterations} sweeps; final residual {residual:.3e}"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class FiniteCMDP:
    """Tabular constrained MDP.

    transition[s, a, s'] is the next-state distribution, task_cost[s, a]
    and safety_cost[s, a] the per-step signals. The episode starts at
    initial_state and runs `horizon` steps.
    """

    num_states: int
    num_actions: int
    transition: np.ndarray
    task_cost: np.ndarray
    safety_cost: np.ndarray
    gamma_c: float
    gamma_l: float
    budget_d: float
    horizon: int
    initial_state: int = 0

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.shape != (self.num_states, self.num_actions, self.num_states):
            raise ValueError(f"transition shape {P.shape} does not match sizes")
        row_sums = P.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > 1e-12):
            worst = float(np.max(np.abs(row_sums - 1.0)))
            raise ValueError(f"transition rows must sum to 1 (worst error {worst:.3e})")
        if np.any(P < -1e-15):
            raise ValueError("transition probabilities must be nonnegative")
        if np.asarray(self.safety_cost).shape != (self.num_states, self.num_actions):
            raise ValueError("safety_cost shape mismatch")
        if np.asarray(self.task_cost).shape != (self.num_states, self.num_actions):
            raise ValueError("task_cost shape mismatch")
        if np.any(np.asarray(self.safety_cost) < 0.0):
            raise ValueError("safety costs must be nonnegative")
        if not 0.0 < self.gamma_c <= 1.0 or not 0.0 < self.gamma_l <= 1.0:
            raise ValueError("discount factors must lie in (0, 1]")
        if self.budget_d < 0.0:
            raise ValueError("budget_d must be nonnegative")
        if not 0 <= self.initial_state < self.num_states:
            raise ValueError("initial_state out of range")

    @property
    def is_deterministic(self) -> bool:
        P = np.asarray(self.transition)
        return bool(np.all(np.max(P, axis=2) > 1.0 - 1e-12))


@dataclass(frozen=True)
class FiniteSauteMDP:
    """Budget-augmented tabular MDP over (state, z-node) pairs."""

    base: FiniteCMDP
    z_grid: np.ndarray
    interpolation: Interpolation
    reshape_n: float
    # z_lo_idx/z_hi_idx/z_hi_weight encode where each exact z' lands on the
    # grid: mass (1 - w) on lo, w on hi. NEAREST folds into a single node.
    z_lo_idx: np.ndarray = field(repr=False, default=None)
    z_hi_idx: np.ndarray = field(repr=False, default=None)
    z_hi_weight: np.ndarray = field(repr=False, default=None)
    shaped_cost: np.ndarray = field(repr=False, default=None)

    @property
    def num_z(self) -> int:
        return len(self.z_grid)

    def z_index(self, z: float) -> int:
        """Nearest grid node (ties resolve to the lower node)."""
        grid = self.z_grid
        pos = int(np.searchsorted(grid, z))
        if pos <= 0:
            return 0
        if pos >= len(grid):
            return len(grid) - 1
        below, above = grid[pos - 1], grid[pos]
        return pos - 1 if (z - below) <= (above - z) else pos

    @property
    def initial_z_index(self) -> int:
        return self.z_index(self.base.budget_d)


@dataclass(frozen=True)
class ValueTable:
    """Solved values with the greedy policy (argmin, lowest index on ties)."""

    values: np.ndarray  # [state, z_node]
    policy: np.ndarray  # [state, z_node] int
    residual: float
    iterations: int
    stage_values: np.ndarray | None = None  # [horizon+1, state, z_node]
    stage_policy: np.ndarray | None = None  # [horizon, state, z_node]


def integer_z_grid(budget_d: float, lowest: int = -1) -> np.ndarray:
    """Grid of integers from `lowest` up to the budget.

    Exact for instances with gamma_l = 1 and integer safety costs: every
    reachable z lands on a node and no interpolation mass is split.
    """
    top = int(np.ceil(budget_d))
    if top < 1:
        top = 1
    return np.arange(lowest, top + 1, dtype=float)


def offset_z_grid(budget_d: float, step: float, nodes_below_zero: int = 1) -> np.ndarray:
    """Grid anchored at the budget, descending in fixed steps.

    Captures instances whose reachable safety states form the lattice
    budget - k*step (gamma_l = 1, safety costs all multiples of `step`).
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    n_nonneg = int(np.floor(budget_d / step + 1e-12))
    count = n_nonneg + nodes_below_zero + 1
    return np.flip(budget_d - step * np.arange(count))


def build_saute_mdp(
    cmdp: FiniteCMDP,
    z_grid: np.ndarray,
    n: float,
    interpolation: Interpolation = NEAREST,
) -> FiniteSauteMDP:
    """Precompute the z-transition map and shaped costs on a grid.

    For each (state, action, z-node) the exact successor
    z' = (z - l(s, a)) / gamma_l is computed, the step cost is shaped with
    that exact z' (so violation is charged at the step causing it), and z'
    is then projected onto the grid: NEAREST picks the closest node, LINEAR
    splits probability mass between the bracketing nodes in proportion to
    distance. Out-of-range z' is absorbed into the boundary nodes.
    """
    grid = np.asarray(z_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise ValueError("z_grid needs at least 3 nodes")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("z_grid must be strictly increasing")
    if not np.any(grid < 0.0):
        raise ValueError("z_grid must contain at least one negative node")
    if interpolation not in (NEAREST, LINEAR):
        raise ValueError(f"unknown interpolation {interpolation!r}")

    S, A, Z = cmdp.num_states, cmdp.num_actions, len(grid)
    l = np.asarray(cmdp.safety_cost, dtype=float)  # (S, A)
    # Exact successor z for every (s, a, z-node).
    z_next = (grid[None, None, :] - l[:, :, None]) / cmdp.gamma_l  # (S, A, Z)

    shaped = np.where(
        z_next >= 0.0,
        np.asarray(cmdp.task_cost, dtype=float)[:, :, None],
        float(n),
    )

    clipped = np.clip(z_next, grid[0], grid[-1])
    hi = np.searchsorted(grid, clipped, side="left")
    hi = np.clip(hi, 1, Z - 1)
    lo = hi - 1
    span = grid[hi] - grid[lo]
    w_hi = (clipped - grid[lo]) / span
    if interpolation == NEAREST:
        # Ties (w == 0.5) resolve to the lower node.
        w_hi = np.where(w_hi > 0.5, 1.0, 0.0)
    return FiniteSauteMDP(
        base=cmdp,
        z_grid=grid,
        interpolation=interpolation,
        reshape_n=float(n),
        z_lo_idx=lo.astype(np.int64),
        z_hi_idx=hi.astype(np.int64),
        z_hi_weight=w_hi,
        shaped_cost=shaped,
    )


def _expected_next_values(mdp: FiniteSauteMDP, values: np.ndarray) -> np.ndarray:
    """E[V(s', z') | s, a, z] for all (s, a, z); shape (S, A, Z)."""
    # Gather V at the two bracketing z-nodes for every (s, a, z), blend,
    # then average over s' with the base transition tensor. The two-sided
    # blend keeps w = 0 / w = 1 exact even against huge sentinel values.
    V_lo = values[:, mdp.z_lo_idx]  # (S', S, A, Z)
    V_hi = values[:, mdp.z_hi_idx]
    w = mdp.z_hi_weight[None, :, :, :]
    blended = (1.0 - w) * V_lo + w * V_hi
    return np.einsum("sap,psaz->saz", mdp.base.transition, blended)


def _sweep(mdp: FiniteSauteMDP, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One Jacobi sweep: returns (new values, greedy policy)."""
    q = mdp.shaped_cost.transpose(0, 2, 1) + mdp.base.gamma_c * _expected_next_values(
        mdp, values
    ).transpose(0, 2, 1)  # (S, Z, A)
    return q.min(axis=2), q.argmin(axis=2)


def value_iteration(
    mdp: FiniteSauteMDP,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    horizon: int | None = None,
    residual_trace: list | None = None,
) -> ValueTable:
    """Solve the augmented MDP.

    With horizon=None and gamma_c < 1 this iterates to a stationary table
    whose sup-norm Bellman residual is at most tol. With an explicit
    horizon (or gamma_c == 1, which falls back to the base horizon) it runs
    exact backward induction and reports the stage-0 table; stage_values
    and stage_policy carry the full time-indexed solution.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if horizon is None and mdp.base.gamma_c >= 1.0:
        horizon = mdp.base.horizon

    S, Z = mdp.base.num_states, mdp.num_z
    if horizon is not None:
        stage_values = np.zeros((horizon + 1, S, Z))
        stage_policy = np.zeros((horizon, S, Z), dtype=np.int64)
        for t in range(horizon - 1, -1, -1):
            stage_values[t], stage_policy[t] = _sweep(mdp, stage_values[t + 1])
        return ValueTable(
            values=stage_values[0],
            policy=stage_policy[0],
            residual=0.0,
            iterations=horizon,
            stage_values=stage_values,
            stage_policy=stage_policy,
        )

    values = np.zeros((S, Z))
    for it in range(1, max_iters + 1):
        new_values, policy = _sweep(mdp, values)
        residual = float(np.max(np.abs(new_values - values)))
        if residual_trace is not None:
            residual_trace.append(residual)
        values = new_values
        if residual <= tol:
            return ValueTable(values=values, policy=policy, residual=residual, iterations=it)
    raise ConvergenceError(residual, max_iters)


@dataclass(frozen=True)
class BruteForceResult:
    feasible: bool
    best_cost: float | None
    actions: tuple[int, ...] | None


def brute_force_safe_optimum(cmdp: FiniteCMDP, horizon: int) -> BruteForceResult:
    """Exhaustive oracle on deterministic instances.

    Enumerates every action sequence of length `horizon`, keeps those whose
    gamma_l-discounted safety total stays within the budget, and returns
    the minimal gamma_c-discounted task cost among them. Infeasible when no
    sequence is safe. Independent of the value-iteration path by
    construction.
    """
    if not cmdp.is_deterministic:
        raise ValueError("brute force oracle requires deterministic transitions")
    total = cmdp.num_actions**horizon
    if total > 10**7:
        raise ValueError(f"{total} sequences exceed the 1e7 enumeration limit")

    next_state = np.argmax(cmdp.transition, axis=2)  # (S, A)
    best_cost = None
    best_seq = None
    for seq in itertools.product(range(cmdp.num_actions), repeat=horizon):
        s = cmdp.initial_state
        task = 0.0
        safety = 0.0
        disc_c = 1.0
        disc_l = 1.0
        for a in seq:
            task += disc_c * cmdp.task_cost[s, a]
            safety += disc_l * cmdp.safety_cost[s, a]
            disc_c *= cmdp.gamma_c
            disc_l *= cmdp.gamma_l
            s = int(next_state[s, a])
        if safety <= cmdp.budget_d and (best_cost is None or task < best_cost):
            best_cost = task
            best_seq = seq
    if best_cost is None:
        return BruteForceResult(feasible=False, best_cost=None, actions=None)
    return BruteForceResult(feasible=True, best_cost=float(best_cost), actions=best_seq)


# Sentinel standing in for +inf during induction; np.inf itself would turn
# zero-probability einsum terms into nan (0 * inf).
_INFEASIBLE = 1e30
_INFEASIBLE_CUTOFF = 1e20


def hard_constrained_values(
    cmdp: FiniteCMDP,
    z_grid: np.ndarray,
    horizon: int | None = None,
) -> np.ndarray:
    """Finite-horizon values of the infinite-penalty limit.

    Backward induction restricted to actions that keep z' >= 0 and lead
    only to successor nodes from which safety remains achievable; (s, z)
    pairs with no such action get +inf. Exact on grids where every
    reachable z lands on a node.
    """
    grid = np.asarray(z_grid, dtype=float)
    if horizon is None:
        horizon = cmdp.horizon
    helper = build_saute_mdp(cmdp, grid, n=0.0, interpolation=NEAREST)
    S = cmdp.num_states
    l = np.asarray(cmdp.safety_cost, dtype=float)
    z_next = (grid[None, None, :] - l[:, :, None]) / cmdp.gamma_l
    safe_action = z_next >= 0.0  # (S, A, Z)

    values = np.zeros((S, len(grid)))
    values[:, grid < 0.0] = _INFEASIBLE
    for _ in range(horizon):
        ev = _expected_next_values(helper, values)  # (S, A, Z)
        q = np.asarray(cmdp.task_cost, dtype=float)[:, :, None] + cmdp.gamma_c * ev
        q = np.where(safe_action, q, _INFEASIBLE)
        values = np.minimum(q.min(axis=1), _INFEASIBLE)
        values[:, grid < 0.0] = _INFEASIBLE
    return np.where(values >= _INFEASIBLE_CUTOFF, np.inf, values)


@dataclass(frozen=True)
class MonotoneReport:
    n_list: tuple[float, ...]
    tables: tuple[np.ndarray, ...]
    hard_limit: np.ndarray
    gaps: tuple[float, ...]
    monotone_ok: bool
    gap_nonincreasing: bool
    first_violation: tuple[int, int, int] | None  # (n index, state, z node)


def monotone_convergence_report(
    cmdp: FiniteCMDP,
    z_grid: np.ndarray,
    n_list: list[float],
    tol: float = 1e-9,
) -> MonotoneReport:
    """Solve the penalty family along ascending n and certify monotonicity.

    Pointwise the tables must satisfy V_{n_i} <= V_{n_{i+1}} + tol, and the
    sup-norm gap to the hard-constrained limit (taken over pairs where that
    limit is finite) must be nonincreasing. Finite-horizon throughout so
    the limit object is exact.
    """
    if any(b < a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be ascending")
    grid = np.asarray(z_grid, dtype=float)
    horizon = cmdp.horizon

    tables = []
    for n in n_list:
        mdp = build_saute_mdp(cmdp, grid, n=n, interpolation=NEAREST)
        tables.append(value_iteration(mdp, horizon=horizon).values)

    hard = hard_constrained_values(cmdp, grid, horizon=horizon)
    feasible_mask = np.isfinite(hard)

    monotone_ok = True
    first_violation = None
    for i in range(len(tables) - 1):
        diff = tables[i] - tables[i + 1]
        if np.any(diff > tol):
            monotone_ok = False
            s, zi = np.unravel_index(int(np.argmax(diff)), diff.shape)
            first_violation = (i, int(s), int(zi))
            break

    gaps = []
    for table in tables:
        if np.any(feasible_mask):
            gaps.append(float(np.max(hard[feasible_mask] - table[feasible_mask])))
        else:
            gaps.append(0.0)
    gap_nonincreasing = all(b <= a + tol for a, b in zip(gaps, gaps[1:]))

    return MonotoneReport(
        n_list=tuple(float(n) for n in n_list),
        tables=tuple(tables),
        hard_limit=hard,
        gaps=tuple(gaps),
        monotone_ok=monotone_ok,
        gap_nonincreasing=gap_nonincreasing,
        first_violation=first_violation,
    )


def cmdp_to_dict(cmdp: FiniteCMDP) -> dict:
    """Serialize an instance to the tensor JSON schema (nested arrays,
    row-major)."""
    return {
        "num_states": cmdp.num_states,
        "num_actions": cmdp.num_actions,
        "transition": np.asarray(cmdp.transition).tolist(),
        "task_cost": np.asarray(cmdp.task_cost).tolist(),
        "safety_cost": np.asarray(cmdp.safety_cost).tolist(),
        "gamma_c": cmdp.gamma_c,
        "gamma_l": cmdp.gamma_l,
        "budget_d": cmdp.budget_d,
        "horizon": cmdp.horizon,
        "initial_state": cmdp.initial_state,
    }


def cmdp_from_dict(payload: dict) -> FiniteCMDP:
    return FiniteCMDP(
        num_states=int(payload["num_states"]),
        num_actions=int(payload["num_actions"]),
        transition=np.asarray(payload["transition"], dtype=float),
        task_cost=np.asarray(payload["task_cost"], dtype=float),
        safety_cost=np.asarray(payload["safety_cost"], dtype=float),
        gamma_c=float(payload["gamma_c"]),
        gamma_l=float(payload["gamma_l"]),
        budget_d=float(payload["budget_d"]),
        horizon=int(payload["horizon"]),
        initial_state=int(payload["initial_state"]),
    )


def almost_sure_check(
    mdp: FiniteSauteMDP,
    policy: np.ndarray,
    episodes: int,
    seed: int,
    horizon: int | None = None,
) -> int:
    """Count constraint-violating episodes under a tabular policy.

    Simulates the augmented chain with the exact z-dynamics (the grid is
    used only for policy lookup) and counts episodes where z ever drops
    below zero. policy may be stationary [S, Z] or stage-indexed [T, S, Z].
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    base = mdp.base
    if horizon is None:
        horizon = base.horizon
    stage_indexed = policy.ndim == 3
    violations = 0
    episode_seeds = derive_seeds(seed, episodes)
    for ep_seed in episode_seeds:
        rng = make_generator(ep_seed)
        s = base.initial_state
        z = float(base.budget_d)
        violated = False
        for t in range(horizon):
            zi = mdp.z_index(z)
            a = int(policy[t, s, zi]) if stage_indexed else int(policy[s, zi])
            z = (z - float(base.safety_cost[s, a])) / base.gamma_l
            if z < 0.0:
                violated = True
            s = int(rng.choice(base.num_states, p=base.transition[s, a]))
        if violated:
            violations += 1
    return violations
