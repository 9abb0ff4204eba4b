"""Safety-state augmentation wrapper.

Wraps any EnvironmentInterface with a scalar safety state z that tracks the
remaining (optionally normalized) safety budget:

    unnormalized:  z' = (z - l) / gamma_l,        z0 = d
    normalized:    z' = (z - l / d) / gamma_l,    z0 = 1

and reshapes the per-step task signal to a constant penalty once z drops
below zero. z is never clipped during an episode, so a policy can observe
how deep a violation went. The step cost is shaped with the post-update z
(the value the info dict reports as "next_safe_state"), so the step that
causes a violation is the first penalized one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    CMDPSpec,
    EnvironmentInterface,
    NegativeSafetyCostError,
    make_generator,
)

__all__ = [
    "ObjectiveMode",
    "Fixed",
    "UniformInterval",
    "SauteConfig",
    "SauteState",
    "safety_step",
    "reshape_cost",
    "strip_augmentation",
    "SauteEnv",
]

# Wire-contract info keys; consumers match these character-exactly.
INFO_TRUE_COST = "true_cost"
INFO_SAFETY_COST = "safety_cost"
INFO_NEXT_SAFE_STATE = "next_safe_state"


class ObjectiveMode(enum.Enum):
    """Orientation of the per-step task signal.

    MINIMIZE_COST: signal is a cost, violation steps cost n.
    MAXIMIZE_REWARD: signal is a reward, violation steps yield -n
    (n = 0 reproduces the reward-zeroing floor convention).
    """

    MINIMIZE_COST = "minimize_cost"
    MAXIMIZE_REWARD = "maximize_reward"


@dataclass(frozen=True)
class Fixed:
    """Deterministic safety budget."""

    d: float

    def sample(self, rng: np.random.Generator) -> float:
        return self.d


@dataclass(frozen=True)
class UniformInterval:
    """Budget resampled uniformly at each reset (meta training)."""

    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 < self.lower <= self.upper:
            raise ValueError("UniformInterval requires 0 < lower <= upper")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lower, self.upper))


@dataclass(frozen=True)
class SauteConfig:
    budget_d: float
    gamma_l: float
    reshape_n: float
    normalize: bool = True
    budget_sampling: Fixed | UniformInterval | None = None
    mode: ObjectiveMode = ObjectiveMode.MINIMIZE_COST
    # The "no cost shaping" ablation: z is still tracked and reported, but
    # the emitted cost stays raw.
    cost_shaping: bool = True

    def __post_init__(self):
        if self.budget_d < 0.0:
            raise ValueError("budget_d must be nonnegative")
        if not 0.0 < self.gamma_l <= 1.0:
            raise ValueError("gamma_l must lie in (0, 1]")
        if self.reshape_n < 0.0 or math.isnan(self.reshape_n):
            raise ValueError("reshape_n must be a nonnegative real")
        if math.isinf(self.reshape_n):
            # The exact solver handles the infinite-penalty limit
            # symbolically; a runnable wrapper needs a finite n.
            raise ValueError("reshape_n must be finite for a runnable wrapper")

    @property
    def sampling(self) -> Fixed | UniformInterval:
        return self.budget_sampling if self.budget_sampling is not None else Fixed(self.budget_d)

    def with_budget(self, d: float) -> "SauteConfig":
        return replace(self, budget_d=d, budget_sampling=Fixed(d))


@dataclass(frozen=True)
class SauteState:
    """Environment observation plus the scalar safety state."""

    observation: np.ndarray
    z: float

    def augmented(self) -> np.ndarray:
        """Flat observation with z appended as the final component."""
        return np.concatenate([np.asarray(self.observation, dtype=float).ravel(), [self.z]])


def safety_step(z: float, safety_cost: float, d: float, gamma_l: float, normalize: bool) -> float:
    """Advance the safety state one step."""
    if safety_cost < 0.0:
        raise ValueError("safety_cost must be nonnegative")
    if not 0.0 < gamma_l <= 1.0:
        raise ValueError("gamma_l must lie in (0, 1]")
    if normalize:
        if d <= 0.0:
            raise ValueError("normalized safety state requires d > 0")
        return (z - safety_cost / d) / gamma_l
    return (z - safety_cost) / gamma_l


def reshape_cost(task_cost: float, z: float, n: float, mode: ObjectiveMode) -> float:
    """Task signal while safe (z >= 0); constant penalty once z < 0.

    z == 0 counts as safe. In reward orientation the penalty is -n, the
    floor value the signal is pinned to on violation.
    """
    if n < 0.0:
        raise ValueError("n must be nonnegative")
    if z >= 0.0:
        return task_cost
    return n if mode is ObjectiveMode.MINIMIZE_COST else -n


def strip_augmentation(state: SauteState) -> np.ndarray:
    """Project back to the raw observation (the "no state augmentation"
    ablation feeds policies this view)."""
    return state.observation


class SauteEnv(EnvironmentInterface):
    """Budget-augmented view of an inner environment.

    As an EnvironmentInterface its observation is the augmented vector
    (inner observation with z appended) and its task_cost output is the
    reshaped signal; the raw signal and the post-update z travel in the
    info dict under the wire keys "true_cost", "safety_cost",
    "next_safe_state".
    """

    def __init__(self, env: EnvironmentInterface, cfg: SauteConfig):
        self._env = env
        self._cfg = cfg
        self._state: SauteState | None = None
        self._episode_d: float = cfg.budget_d
        inner = env.spec
        self._spec = CMDPSpec(
            state_dim=inner.state_dim + 1,
            action_space=inner.action_space,
            gamma_c=inner.gamma_c,
            gamma_l=cfg.gamma_l,
            budget_d=cfg.budget_d,
            horizon=inner.horizon,
        )

    @property
    def spec(self) -> CMDPSpec:
        return self._spec

    @property
    def cfg(self) -> SauteConfig:
        return self._cfg

    @property
    def inner(self) -> EnvironmentInterface:
        return self._env

    @property
    def state(self) -> SauteState:
        if self._state is None:
            raise RuntimeError("reset() must be called before state access")
        return self._state

    @property
    def episode_budget(self) -> float:
        """Budget in force for the current episode (sampled at reset)."""
        return self._episode_d

    def reset(self, seed: int) -> np.ndarray:
        obs = self._env.reset(seed=seed)
        # Budget sampling consumes a dedicated stream so the inner
        # environment sees the same seed with or without meta training.
        rng = make_generator(seed ^ 0x5AFE_B0D6)
        self._episode_d = self._cfg.sampling.sample(rng)
        z0 = 1.0 if self._cfg.normalize else self._episode_d
        self._state = SauteState(observation=np.asarray(obs, dtype=float), z=z0)
        return self._state.augmented()

    def step(self, action) -> tuple[np.ndarray, float, float, bool, dict]:
        if self._state is None:
            raise RuntimeError("reset() must be called before step()")
        obs, task_cost, safety_cost, done, info = self._env.step(action)
        if safety_cost < 0.0:
            raise NegativeSafetyCostError(f"inner environment emitted safety cost {safety_cost}")
        next_z = safety_step(
            self._state.z,
            safety_cost,
            self._episode_d,
            self._cfg.gamma_l,
            self._cfg.normalize,
        )
        if self._cfg.cost_shaping:
            shaped = reshape_cost(task_cost, next_z, self._cfg.reshape_n, self._cfg.mode)
        else:
            shaped = task_cost
        self._state = SauteState(observation=np.asarray(obs, dtype=float), z=next_z)
        out_info = dict(info)
        out_info[INFO_TRUE_COST] = float(task_cost)
        out_info[INFO_SAFETY_COST] = float(safety_cost)
        out_info[INFO_NEXT_SAFE_STATE] = float(next_z)
        return self._state.augmented(), float(shaped), float(safety_cost), done, out_info

    # Known-model planning hooks. Snapshots capture the wrapper state along
    # with the inner environment's, so planners can simulate and rewind.

    def snapshot(self):
        return (self._env.snapshot(), self._state, self._episode_d)

    def restore(self, snap) -> None:
        inner_snap, state, episode_d = snap
        self._env.restore(inner_snap)
        self._state = state
        self._episode_d = episode_d

    @property
    def can_plan_batch(self) -> bool:
        """True when the inner environment offers batch simulation;
        planners fall back to snapshot/step simulation otherwise."""
        return hasattr(self._env, "simulate_actions")

    def plan_batch(self, snap, actions: np.ndarray):
        """Vectorized candidate evaluation when the inner environment
        supports batch simulation (`simulate_actions`).

        Returns the planners' PlanBatch: raw task signals plus the
        post-update safety state of every simulated step, computed with
        the same update rule the live wrapper applies.
        """
        from .agents import PlanBatch

        inner_snap, state, episode_d = snap
        raw, safety = self._env.simulate_actions(inner_snap, actions)
        steps = raw.shape[1]
        deltas = safety / episode_d if self._cfg.normalize else safety
        powers = self._cfg.gamma_l ** np.arange(steps)
        weighted = np.cumsum(powers[None, :] * deltas, axis=1)
        z_after = (state.z - weighted) / (powers * self._cfg.gamma_l)[None, :]
        return PlanBatch(raw_signal=raw, z_after=z_after)
