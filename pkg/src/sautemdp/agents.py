"""Decision makers: sampling-based planners over known models, tabular
Q-learning on budget-augmented state spaces, and the dual-ascent
(Lagrangian) baseline that satisfies constraints only in expectation.

Planners treat the live environment as the model (known-model planning):
they snapshot its state, simulate candidate action sequences, and restore
before returning. Environments may expose a vectorized `plan_batch` fast
path; the generic snapshot/step fallback computes identical returns.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .core import Box, PolicyInterface, derive_seeds, make_generator
from .saute import ObjectiveMode, SauteEnv
from .solver import FiniteSauteMDP

__all__ = [
    "CEMPlanConfig",
    "PlanObjective",
    "PlanBatch",
    "cem_plan",
    "cem_plan_sequence",
    "random_shooting_plan",
    "PlannerPolicy",
    "LearnSchedules",
    "TabularPolicy",
    "tabular_q_learn",
    "q_learn_on_env",
    "TabularSautePolicy",
    "LagrangianState",
    "lagrangian_update",
    "LAMBDA_CAP",
]


class PlanObjective(enum.Enum):
    """What the planner scores: the reshaped (budget-aware) return or the
    raw task return (budget-blind)."""

    SHAPED = "shaped"
    RAW = "raw"


@dataclass(frozen=True)
class CEMPlanConfig:
    plan_horizon: int
    population: int
    elite_fraction: float
    iterations: int
    initial_stddev: float
    min_stddev: float
    replan_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.elite_fraction < 1.0:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if self.elite_count < 2:
            raise ValueError("elite count must be at least 2")
        if self.population < self.elite_count:
            raise ValueError("population must cover the elite count")
        if self.plan_horizon < 1 or self.iterations < 1 or self.replan_every < 1:
            raise ValueError("plan_horizon, iterations, replan_every must be >= 1")

    @property
    def elite_count(self) -> int:
        return max(2, int(round(self.population * self.elite_fraction)))


@dataclass(frozen=True)
class PlanBatch:
    """Simulated outcomes of candidate action sequences.

    raw_signal[i, k] is the unshaped task signal of sequence i at step k;
    z_after[i, k] the post-update safety state (None when the model carries
    no safety augmentation). Sequences may be truncated to the steps left
    in the episode.
    """

    raw_signal: np.ndarray
    z_after: np.ndarray | None


def _simulate_batch(model, snap, actions: np.ndarray) -> PlanBatch:
    """Generic snapshot/step simulation; one model pass per candidate.

    Steps past a candidate's episode end contribute zero signal and carry
    the safety state forward unchanged.
    """
    N, H = actions.shape[0], actions.shape[1]
    raw = np.zeros((N, H))
    z_after = np.zeros((N, H))
    have_z = True
    for i in range(N):
        model.restore(snap)
        for k in range(H):
            _, signal, _, done, info = model.step(actions[i, k])
            if "true_cost" in info:
                raw[i, k] = info["true_cost"]
            else:
                raw[i, k] = signal
            if "next_safe_state" in info:
                z_after[i, k] = info["next_safe_state"]
            else:
                have_z = False
            if done:
                z_after[i, k + 1 :] = z_after[i, k]
                break
    model.restore(snap)
    return PlanBatch(raw_signal=raw, z_after=z_after if have_z else None)


def _evaluate_sequences(
    model,
    snap,
    actions: np.ndarray,
    objective: PlanObjective,
    mode: ObjectiveMode,
    gamma: float,
    reshape_n: float,
    risk_floor: float,
) -> np.ndarray:
    """Discounted objective per candidate; larger-is-better orientation."""
    if hasattr(model, "plan_batch") and getattr(model, "can_plan_batch", True):
        batch = model.plan_batch(snap, actions)
    else:
        batch = _simulate_batch(model, snap, actions)
    signal = batch.raw_signal
    if objective is PlanObjective.SHAPED and batch.z_after is not None:
        penalty = reshape_n if mode is ObjectiveMode.MINIMIZE_COST else -reshape_n
        signal = np.where(batch.z_after >= risk_floor, signal, penalty)
    discounts = gamma ** np.arange(signal.shape[1])
    returns = signal @ discounts
    return returns if mode is ObjectiveMode.MAXIMIZE_REWARD else -returns


def _planning_context(model, mode: ObjectiveMode | None):
    """Resolve shaping parameters from the model when it is sauteed."""
    if isinstance(model, SauteEnv):
        cfg = model.cfg
        return (mode or cfg.mode), cfg.reshape_n
    if mode is None:
        raise ValueError("mode is required for models without a saute config")
    return mode, 0.0


def cem_plan_sequence(
    model,
    cfg: CEMPlanConfig,
    objective: PlanObjective,
    seed: int,
    mode: ObjectiveMode | None = None,
    risk_floor: float = 0.0,
    snap=None,
    warm_start: np.ndarray | None = None,
    elite_trace: list | None = None,
) -> np.ndarray:
    """Cross-entropy refinement of an action-sequence distribution.

    Returns the elite mean of the final iteration, shape (plan_horizon,
    action_dim). Previous-iteration elites re-enter every candidate pool,
    so the elite objective improves monotonically on deterministic models;
    pass elite_trace to record the per-iteration elite-mean objective
    (larger-is-better orientation). Deterministic for a fixed seed.
    """
    mode, reshape_n = _planning_context(model, mode)
    space = model.spec.action_space
    if not isinstance(space, Box):
        raise ValueError("sampling planners require a Box action space")
    lo = np.asarray(space.lower)
    hi = np.asarray(space.upper)
    dim = space.dim
    H = cfg.plan_horizon
    gamma = model.spec.gamma_c
    rng = make_generator(seed)
    snap = model.snapshot() if snap is None else snap

    mean = np.zeros((H, dim)) if warm_start is None else np.array(warm_start, dtype=float)
    std = np.full((H, dim), cfg.initial_stddev)
    n_elite = cfg.elite_count
    elites = None
    for _ in range(cfg.iterations):
        samples = mean + std * rng.standard_normal((cfg.population, H, dim))
        samples = np.clip(samples, lo, hi)
        if elites is not None:
            samples[:n_elite] = elites
        returns = _evaluate_sequences(
            model, snap, samples, objective, mode, gamma, reshape_n, risk_floor
        )
        if not np.all(np.isfinite(returns)):
            raise ValueError("non-finite simulated returns; aborting plan")
        order = np.argsort(-returns, kind="stable")[:n_elite]
        elites = samples[order]
        if elite_trace is not None:
            elite_trace.append(float(returns[order].mean()))
        mean = elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), cfg.min_stddev)
    return mean


def cem_plan(
    model,
    cfg: CEMPlanConfig,
    objective: PlanObjective,
    seed: int,
    mode: ObjectiveMode | None = None,
    risk_floor: float = 0.0,
    snap=None,
) -> np.ndarray:
    """First action of the final elite-mean sequence."""
    return cem_plan_sequence(
        model, cfg, objective, seed, mode=mode, risk_floor=risk_floor, snap=snap
    )[0]


def random_shooting_plan(
    model,
    horizon: int,
    samples: int,
    seed: int,
    objective: PlanObjective = PlanObjective.RAW,
    mode: ObjectiveMode | None = None,
    risk_floor: float = 0.0,
    snap=None,
) -> np.ndarray:
    """Best-of-N uniformly sampled sequences; same objective contract as
    the CEM planner. Returns the first action of the winner."""
    if samples < 1 or horizon < 1:
        raise ValueError("samples and horizon must be >= 1")
    mode, reshape_n = _planning_context(model, mode)
    space = model.spec.action_space
    if not isinstance(space, Box):
        raise ValueError("sampling planners require a Box action space")
    lo = np.asarray(space.lower)
    hi = np.asarray(space.upper)
    rng = make_generator(seed)
    snap = model.snapshot() if snap is None else snap
    candidates = rng.uniform(lo, hi, size=(samples, horizon, space.dim))
    returns = _evaluate_sequences(
        model, snap, candidates, objective, mode, model.spec.gamma_c, reshape_n, risk_floor
    )
    best = int(np.argmax(returns))
    return candidates[best, 0]


class PlannerPolicy(PolicyInterface):
    """Receding-horizon wrapper turning a planner into a rollout policy.

    Plans against the same environment instance it acts in (known-model
    planning); executes cfg.replan_every actions per plan and warm-starts
    the next plan with the shifted mean.
    """

    def __init__(
        self,
        env,
        cfg: CEMPlanConfig,
        objective: PlanObjective,
        mode: ObjectiveMode | None = None,
        risk_floor: float = 0.0,
    ):
        self._env = env
        self._cfg = cfg
        self._objective = objective
        self._mode = mode
        self._risk_floor = risk_floor
        self._rng = make_generator(0)
        self._buffer: list[np.ndarray] = []
        self._prev_mean: np.ndarray | None = None

    def reset(self, seed: int) -> None:
        self._rng = make_generator(seed)
        self._buffer = []
        self._prev_mean = None

    def act(self, observation: np.ndarray) -> np.ndarray:
        if not self._buffer:
            plan_seed = int(self._rng.integers(0, 2**63 - 1))
            mean = cem_plan_sequence(
                self._env,
                self._cfg,
                self._objective,
                plan_seed,
                mode=self._mode,
                risk_floor=self._risk_floor,
                warm_start=self._prev_mean,
            )
            k = self._cfg.replan_every
            self._buffer = [mean[i] for i in range(min(k, len(mean)))]
            shifted = np.roll(mean, -k, axis=0)
            shifted[-k:] = 0.0
            self._prev_mean = shifted
        return self._buffer.pop(0)


@dataclass(frozen=True)
class LearnSchedules:
    """Linear schedules for exploration and step size."""

    epsilon_start: float = 0.3
    epsilon_end: float = 0.02
    alpha_start: float = 0.5
    alpha_end: float = 0.05
    decay_fraction: float = 0.8  # fraction of episodes over which to anneal

    def at(self, episode: int, episodes: int) -> tuple[float, float]:
        span = max(1, int(episodes * self.decay_fraction))
        frac = min(1.0, episode / span)
        eps = self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
        alpha = self.alpha_start + frac * (self.alpha_end - self.alpha_start)
        return eps, alpha


@dataclass
class TabularPolicy:
    """Q-table over (state, z-node, action) with greedy lookup.

    maximize records the orientation the table was trained under; greedy
    resolves ties to the lowest action index either way.
    """

    q_values: np.ndarray
    z_grid: np.ndarray
    maximize: bool

    def z_index(self, z: float) -> int:
        grid = self.z_grid
        pos = int(np.searchsorted(grid, z))
        if pos <= 0:
            return 0
        if pos >= len(grid):
            return len(grid) - 1
        return pos - 1 if (z - grid[pos - 1]) <= (grid[pos] - z) else pos

    def greedy(self, state_index: int, z: float) -> int:
        row = self.q_values[state_index, self.z_index(z)]
        return int(np.argmax(row)) if self.maximize else int(np.argmin(row))

    def greedy_table(self) -> np.ndarray:
        if self.maximize:
            return np.argmax(self.q_values, axis=2)
        return np.argmin(self.q_values, axis=2)

    def to_dict(self) -> dict:
        """Tensor JSON schema: nested row-major arrays."""
        return {
            "q_values": self.q_values.tolist(),
            "z_grid": self.z_grid.tolist(),
            "maximize": self.maximize,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TabularPolicy":
        return cls(
            q_values=np.asarray(payload["q_values"], dtype=float),
            z_grid=np.asarray(payload["z_grid"], dtype=float),
            maximize=bool(payload["maximize"]),
        )


def tabular_q_learn(
    mdp: FiniteSauteMDP,
    episodes: int,
    schedules: LearnSchedules,
    seed: int,
    horizon: int | None = None,
    cost_shaping: bool = True,
) -> TabularPolicy:
    """Online Q-learning on the augmented tabular chain (cost orientation).

    Simulates exact z-dynamics, projects z to the nearest grid node for
    table lookups, and shapes each step's cost with the post-update z.
    cost_shaping=False is the "no cost shaping" ablation: the z state is
    still tracked but the learner sees raw task costs only. Divergence
    (non-finite table entries) raises immediately.
    """
    base = mdp.base
    if horizon is None:
        horizon = base.horizon
    grid = mdp.z_grid
    S, A, Z = base.num_states, base.num_actions, mdp.num_z
    q = np.zeros((S, Z, A))
    episode_seeds = derive_seeds(seed, episodes)
    for ep, ep_seed in enumerate(episode_seeds):
        rng = make_generator(ep_seed)
        eps, alpha = schedules.at(ep, episodes)
        s = base.initial_state
        z = float(base.budget_d)
        zi = mdp.z_index(z)
        for t in range(horizon):
            if rng.random() < eps:
                a = int(rng.integers(A))
            else:
                a = int(np.argmin(q[s, zi]))
            z_next = (z - float(base.safety_cost[s, a])) / base.gamma_l
            if cost_shaping and z_next < 0.0:
                cost = mdp.reshape_n
            else:
                cost = float(base.task_cost[s, a])
            s_next = int(rng.choice(S, p=base.transition[s, a]))
            zi_next = mdp.z_index(z_next)
            target = cost
            if t + 1 < horizon:
                target += base.gamma_c * float(np.min(q[s_next, zi_next]))
            q[s, zi, a] += alpha * (target - q[s, zi, a])
            s, z, zi = s_next, z_next, zi_next
        if not np.all(np.isfinite(q)):
            raise FloatingPointError(f"Q-table diverged at episode {ep}")
    return TabularPolicy(q_values=q, z_grid=np.asarray(grid, dtype=float), maximize=False)


def q_learn_on_env(
    make_env,
    num_states: int,
    num_actions: int,
    z_grid: np.ndarray,
    episodes: int,
    schedules: LearnSchedules,
    seed: int,
    maximize: bool = True,
    learn_gamma: float | None = None,
    q_init: float = 0.0,
) -> TabularPolicy:
    """Q-learning through a sauteed environment (reward orientation by
    default).

    make_env() must return a SauteEnv whose inner environment exposes an
    integer `state_index`. The learner indexes the table with that integer
    plus the nearest z-node of the wrapper's safety state; training across
    resampled budgets (meta training) works because the normalized z keeps
    one shared grid. learn_gamma overrides the environment's task discount
    for the bootstrap target only; a discount below 1 keeps the stationary
    table well-posed on finite episodes (evaluation metrics are unaffected).
    An optimistic q_init (above attainable value in reward orientation)
    drives systematic exploration of under-visited nodes.
    """
    grid = np.asarray(z_grid, dtype=float)
    q = np.full((num_states, len(grid), num_actions), float(q_init))
    policy = TabularPolicy(q_values=q, z_grid=grid, maximize=maximize)
    env = make_env()
    gamma = env.spec.gamma_c if learn_gamma is None else learn_gamma
    episode_seeds = derive_seeds(seed, episodes)
    for ep, ep_seed in enumerate(episode_seeds):
        rng = make_generator(ep_seed ^ 0x9E3779B9)
        eps, alpha = schedules.at(ep, episodes)
        env.reset(seed=ep_seed)
        s = env.inner.state_index
        zi = policy.z_index(env.state.z)
        done = False
        while not done:
            if rng.random() < eps:
                a = int(rng.integers(num_actions))
            else:
                row = q[s, zi]
                a = int(np.argmax(row)) if maximize else int(np.argmin(row))
            _, shaped, _, done, info = env.step(a)
            s_next = env.inner.state_index
            zi_next = policy.z_index(info["next_safe_state"])
            target = shaped
            if not done:
                best = np.max(q[s_next, zi_next]) if maximize else np.min(q[s_next, zi_next])
                target += gamma * float(best)
            q[s, zi, a] += alpha * (target - q[s, zi, a])
            s, zi = s_next, zi_next
        if not np.all(np.isfinite(q)):
            raise FloatingPointError(f"Q-table diverged at episode {ep}")
    return policy


class TabularSautePolicy(PolicyInterface):
    """Rollout adapter: greedy tabular actions on (state_index, z)."""

    def __init__(self, policy: TabularPolicy, env: SauteEnv):
        self._policy = policy
        self._env = env

    def act(self, observation: np.ndarray) -> int:
        return self._policy.greedy(self._env.inner.state_index, self._env.state.z)


LAMBDA_CAP = 1e6


@dataclass(frozen=True)
class LagrangianState:
    """Dual variable of the expectation-constrained baseline."""

    lam: float = 1.0
    penalty_lr: float = 5e-2
    running_constraint_estimate: float = 0.0
    capped: bool = False

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lambda must stay nonnegative")
        if self.penalty_lr <= 0.0:
            raise ValueError("penalty_lr must be positive")


def lagrangian_update(ls: LagrangianState, observed_safety_total: float, d: float) -> LagrangianState:
    """Projected dual ascent on the episodic constraint gap.

    lambda <- max(0, lambda + lr * (observed - d)), capped at LAMBDA_CAP;
    a capped run is flagged rather than treated as converged.
    """
    lam = max(0.0, ls.lam + ls.penalty_lr * (observed_safety_total - d))
    capped = lam >= LAMBDA_CAP
    if capped:
        lam = LAMBDA_CAP
    return replace(
        ls,
        lam=lam,
        running_constraint_estimate=observed_safety_total,
        capped=ls.capped or capped,
    )


def stationary_penalized_policy(
    cmdp,
    lam: float,
    solver_gamma: float = 0.99,
    tol: float = 1e-10,
    max_iters: int = 100_000,
) -> np.ndarray:
    """Stationary greedy policy minimizing task_cost + lam * safety_cost.

    Plain (unaugmented) value iteration with the baseline's internal
    discount; the policy sees only the raw state, which is the point of
    the baseline. Ties break to the lowest action index.
    """
    penalized = np.asarray(cmdp.task_cost, dtype=float) + lam * np.asarray(
        cmdp.safety_cost, dtype=float
    )
    values = np.zeros(cmdp.num_states)
    for _ in range(max_iters):
        q = penalized + solver_gamma * np.einsum("sap,p->sa", cmdp.transition, values)
        new_values = q.min(axis=1)
        if np.max(np.abs(new_values - values)) <= tol:
            return q.argmin(axis=1)
        values = new_values
    raise FloatingPointError("penalized value iteration did not converge")


class StationaryGridPolicy(PolicyInterface):
    """Rollout adapter for per-start stationary cell policies.

    The first observation of an episode fixes which table applies (the
    grids under test teleport back to the episode's start, so routes from
    different starts need different tables).
    """

    def __init__(self, tables: dict[tuple[int, int], np.ndarray], width: int):
        self._tables = tables
        self._width = width
        self._active: np.ndarray | None = None

    def reset(self, seed: int) -> None:
        self._active = None

    def act(self, observation: np.ndarray) -> int:
        cell = (int(round(observation[0])), int(round(observation[1])))
        if self._active is None:
            self._active = self._tables[cell]
        return int(self._active[cell[1] * self._width + cell[0]])


@dataclass(frozen=True)
class LagrangianTrainResult:
    tables: dict
    final_lambda: float
    lambda_history: tuple[float, ...]
    capped: bool


def train_lagrangian_patrol(
    env_factory,
    iterations: int,
    batch_episodes: int,
    seed: int,
    penalty_lr: float = 5e-2,
    initial_penalty: float = 1.0,
    solver_gamma: float = 0.99,
    lambda_tiebreak: float = 1e-6,
) -> LagrangianTrainResult:
    """Dual ascent for the expectation-constrained patrol baseline.

    Each iteration solves the penalized stationary policy per start cell
    at the current multiplier, observes the mean episodic safety total
    over a seeded batch of rollouts, and updates the multiplier by
    projected ascent. The returned policy is solved at the tail-averaged
    multiplier, floored at `lambda_tiebreak` so ties between task-equal
    routes resolve toward lower safety cost.
    """
    from .core import rollout  # local import; core does not know agents

    env = env_factory()
    params = env.params
    d = params.budget_d
    compiled = {
        start: env.to_finite_cmdp(start=start, task_sign=-1.0)
        for start in params.start_cells
    }
    ls = LagrangianState(lam=initial_penalty, penalty_lr=penalty_lr)
    history = [ls.lam]
    batch_seeds = derive_seeds(seed, iterations)
    for it, it_seed in enumerate(batch_seeds):
        lam_solve = max(ls.lam, lambda_tiebreak)
        tables = {
            start: stationary_penalized_policy(cmdp, lam_solve, solver_gamma)
            for start, cmdp in compiled.items()
        }
        policy = StationaryGridPolicy(tables, params.width)
        totals = []
        for ep_seed in derive_seeds(it_seed, batch_episodes):
            record = rollout(env, policy, params.horizon, ep_seed)
            totals.append(record.budget_used)
        ls = lagrangian_update(ls, float(np.mean(totals)), d)
        history.append(ls.lam)
    tail = history[len(history) // 2 :]
    final_lambda = max(float(np.mean(tail)), lambda_tiebreak)
    tables = {
        start: stationary_penalized_policy(cmdp, final_lambda, solver_gamma)
        for start, cmdp in compiled.items()
    }
    return LagrangianTrainResult(
        tables=tables,
        final_lambda=final_lambda,
        lambda_history=tuple(history),
        capped=ls.capped,
    )
