"""Constrained-MDP primitives: problem specs, environment/policy interfaces,
trajectory records, and return/constraint accounting.

A constrained MDP carries two per-step signals: a task cost c (or reward,
depending on the experiment's orientation) discounted by gamma_c, and a
nonnegative safety cost l discounted by gamma_l. An episode satisfies the
budget constraint when the discounted safety sum stays at or below the
budget d.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

import numpy as np

__all__ = [
    "Box",
    "Discrete",
    "CMDPSpec",
    "EnvironmentInterface",
    "PolicyInterface",
    "TrajectoryStep",
    "TrajectoryRecord",
    "EngineError",
    "RolloutError",
    "NegativeSafetyCostError",
    "derive_seeds",
    "make_generator",
    "rollout",
    "discounted_task_return",
    "safety_margin",
    "prefix_constraint_equivalence",
]


class EngineError(Exception):
    """Base class for engine failures."""


class NegativeSafetyCostError(EngineError):
    """An environment emitted a safety cost below zero.

    Safety costs are nonnegative by definition; a negative value is an
    environment bug and is never clamped silently.
    """


class RolloutError(EngineError):
    """A rollout failed mid-episode; carries the offending step index."""

    def __init__(self, step_index: int, message: str):
        super().__init__(f"rollout failed at step {step_index}: {message}")
        self.step_index = step_index


@dataclass(frozen=True)
class Box:
    """Continuous action space with per-dimension bounds."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower/upper must have equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def clip(self, action: np.ndarray) -> np.ndarray:
        return np.clip(action, self.lower, self.upper)


@dataclass(frozen=True)
class Discrete:
    """Finite action space {0, ..., n-1}."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("Discrete space needs at least one action")


@dataclass(frozen=True)
class CMDPSpec:
    """Static description of a constrained MDP instance.

    The infinite-horizon problem is truncated at `horizon` with no terminal
    bootstrap; evaluation always runs finite episodes.
    """

    state_dim: int
    action_space: Box | Discrete
    gamma_c: float
    gamma_l: float
    budget_d: float
    horizon: int

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state_dim must be positive")
        if not 0.0 < self.gamma_c <= 1.0:
            raise ValueError("gamma_c must lie in (0, 1]")
        if not 0.0 < self.gamma_l <= 1.0:
            raise ValueError("gamma_l must lie in (0, 1]")
        if self.budget_d < 0.0:
            raise ValueError("budget_d must be nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


class EnvironmentInterface(ABC):
    """Episodic environment emitting (task_cost, safety_cost) per step.

    Contract:
      * safety_cost >= 0 always;
      * identical seed and action sequence reproduce the trajectory exactly;
      * instances are single-context (no concurrent calls on one instance).
    """

    @property
    @abstractmethod
    def spec(self) -> CMDPSpec: ...

    @abstractmethod
    def reset(self, seed: int) -> np.ndarray:
        """Start a new episode; returns the initial observation."""

    @abstractmethod
    def step(self, action) -> tuple[np.ndarray, float, float, bool, dict]:
        """Advance one step; returns (obs, task_cost, safety_cost, done, info)."""


class PolicyInterface(ABC):
    """Action chooser fed by rollout(); single-context like environments."""

    def reset(self, seed: int) -> None:  # noqa: B027 - optional hook
        """Re-seed internal randomness at episode start. Default: no-op."""

    @abstractmethod
    def act(self, observation: np.ndarray): ...


@dataclass(frozen=True)
class TrajectoryStep:
    observation: np.ndarray
    action: Any
    task_cost: float
    safety_cost: float
    z_value: float | None = None
    # Unshaped task signal, recorded when the environment reports one
    # (budget wrappers emit it as info["true_cost"]).
    raw_task_cost: float | None = None


@dataclass(frozen=True)
class TrajectoryRecord:
    """Immutable per-episode log.

    budget_used is the gamma_l-discounted sum of the recorded safety costs,
    accumulated in step order.
    """

    steps: tuple[TrajectoryStep, ...]
    seed: int
    budget_used: float

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def task_costs(self) -> np.ndarray:
        return np.array([s.task_cost for s in self.steps], dtype=float)

    @property
    def safety_costs(self) -> np.ndarray:
        return np.array([s.safety_cost for s in self.steps], dtype=float)

    @property
    def raw_task_costs(self) -> np.ndarray:
        """Unshaped task costs where recorded; falls back to task_cost."""
        return np.array(
            [s.task_cost if s.raw_task_cost is None else s.raw_task_cost for s in self.steps],
            dtype=float,
        )

    @property
    def z_values(self) -> list[float | None]:
        return [s.z_value for s in self.steps]


def derive_seeds(master_seed: int, n: int) -> list[int]:
    """Derive n independent child seeds from one master seed.

    Uses SeedSequence so parallel consumers (environment stream, policy
    stream, per-trajectory workers) never share entropy.
    """
    state = np.random.SeedSequence(master_seed).generate_state(n, dtype=np.uint64)
    return [int(x) for x in state]


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based generator; cheap to create per episode."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _check_finite(obs: np.ndarray, step_index: int) -> None:
    arr = np.asarray(obs, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise RolloutError(step_index, f"non-finite observation {arr!r}")


def rollout(
    env: EnvironmentInterface,
    policy: PolicyInterface,
    horizon: int,
    seed: int,
) -> TrajectoryRecord:
    """Run one seeded episode of at most `horizon` steps.

    The master seed splits into one stream for the environment and one for
    the policy, so two rollouts with equal seeds are bit-identical. Ends
    early only when the environment signals done.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    env_seed, policy_seed = derive_seeds(seed, 2)
    obs = env.reset(seed=env_seed)
    _check_finite(obs, 0)
    policy.reset(seed=policy_seed)

    gamma_l = env.spec.gamma_l
    steps: list[TrajectoryStep] = []
    budget_used = 0.0
    discount = 1.0
    for t in range(horizon):
        try:
            action = policy.act(obs)
            next_obs, task_cost, safety_cost, done, info = env.step(action)
        except EngineError:
            raise
        except Exception as exc:
            raise RolloutError(t, repr(exc)) from exc
        if safety_cost < 0.0:
            raise NegativeSafetyCostError(
                f"safety cost {safety_cost} < 0 at step {t}"
            )
        _check_finite(next_obs, t)
        z_value = info.get("next_safe_state") if info else None
        raw_cost = info.get("true_cost") if info else None
        steps.append(
            TrajectoryStep(
                obs, action, float(task_cost), float(safety_cost), z_value, raw_cost
            )
        )
        budget_used += discount * float(safety_cost)
        discount *= gamma_l
        obs = next_obs
        if done:
            break
    return TrajectoryRecord(steps=tuple(steps), seed=seed, budget_used=budget_used)


def discounted_task_return(traj: TrajectoryRecord, gamma_c: float) -> float:
    """Sum of gamma_c^t * task_cost_t over the episode."""
    if len(traj) == 0:
        raise ValueError("trajectory is empty")
    total = 0.0
    discount = 1.0
    for step in traj.steps:
        total += discount * step.task_cost
        discount *= gamma_c
    return total


def safety_margin(traj: TrajectoryRecord, d: float, gamma_l: float) -> float:
    """Remaining budget d minus the discounted safety sum.

    Negative means the episode violated the constraint.
    """
    total = 0.0
    discount = 1.0
    for step in traj.steps:
        if step.safety_cost < 0.0:
            raise NegativeSafetyCostError(f"safety cost {step.safety_cost} < 0")
        total += discount * step.safety_cost
        discount *= gamma_l
    return d - total


def prefix_constraint_equivalence(traj: TrajectoryRecord, d: float, gamma_l: float) -> bool:
    """True iff "every partial discounted safety sum <= d" agrees with
    "the total discounted safety sum <= d".

    With nonnegative costs the partial sums are nondecreasing, so both sides
    must always coincide; this exists as a runtime assertion of that
    monotonicity argument.
    """
    partial = 0.0
    discount = 1.0
    all_prefixes_ok = True
    for step in traj.steps:
        if step.safety_cost < 0.0:
            raise NegativeSafetyCostError(f"safety cost {step.safety_cost} < 0")
        partial += discount * step.safety_cost
        discount *= gamma_l
        if partial > d:
            all_prefixes_ok = False
    total_ok = partial <= d
    return all_prefixes_ok == total_ok
