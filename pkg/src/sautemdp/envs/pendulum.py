"""Torque-limited pendulum swing-up with an unsafe angle band.

Dynamics follow the classic-control convention: theta measured from the
upright position, rod inertia, semi-implicit Euler at dt = 0.05,

    theta_ddot = (3 g / 2 L) sin(theta) + (3 / m L^2) a,

with the action clipped to [-2, 2], angular velocity clipped to [-8, 8],
and theta wrapped to (-pi, pi]. The observation is (cos theta, sin theta,
theta_dot).

The task signal is a reward in [0, 1], largest at the upright rest state;
experiments using this environment run in MAXIMIZE_REWARD orientation.
The safety cost is a tent function of the angle in degrees, peaking at the
unsafe angle delta = 25 deg and supported on [-25 deg, 75 deg]; the band
boundary test applies to the wrapped angle.

Scalar stepping and the batch helpers share the same array arithmetic, so
a planner simulating batches reproduces the live environment bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Box, CMDPSpec, EnvironmentInterface, make_generator

__all__ = [
    "PendulumParams",
    "PendulumEnv",
    "pendulum_task_cost",
    "pendulum_safety_cost",
    "pendulum_step",
    "wrap_angle",
]

# Normalizer of the task reward: theta^2 + 0.1 * thdot^2 + 0.001 * a^2 at
# the corner of the clipped domain (pi, 8, 2).
_REWARD_SCALE = np.pi**2 + 6.404


@dataclass(frozen=True)
class PendulumParams:
    gravity: float = 10.0
    mass: float = 1.0
    length: float = 1.0
    dt: float = 0.05
    torque_limit: float = 2.0
    angular_velocity_limit: float = 8.0
    unsafe_angle_delta_deg: float = 25.0
    horizon: int = 200
    # Evaluation starts near the hanging state; the widths are an artifact
    # choice recorded here rather than anything the task pins down.
    init_angle_halfwidth: float = 0.1
    init_velocity_halfwidth: float = 0.05
    gamma_c: float = 0.99
    gamma_l: float = 1.0
    budget_d: float = 30.0


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    return np.arctan2(np.sin(theta), np.cos(theta))


def pendulum_task_cost(theta, theta_dot, torque, params: PendulumParams = PendulumParams()):
    """Reward in [0, 1]: 1 at the upright rest state, 0 at the clipped
    corner of the domain. Torque is clipped before evaluation; the result
    is floored at 0 (the raw expression can undershoot by one ulp at the
    exact corner)."""
    a = np.clip(torque, -params.torque_limit, params.torque_limit)
    value = 1.0 - (theta**2 + 0.1 * theta_dot**2 + 0.001 * a**2) / _REWARD_SCALE
    return np.maximum(value, 0.0)


def pendulum_safety_cost(theta_deg, delta_deg: float = 25.0):
    """Tent-shaped cost on the angle in degrees from upright.

    1 at the unsafe angle delta, falling linearly to 0 at delta +/- 50 and
    zero outside [-25, 75]; continuous at both band boundaries.
    """
    theta_deg = np.asarray(theta_deg, dtype=float)
    inside = (theta_deg >= delta_deg - 50.0) & (theta_deg <= delta_deg + 50.0)
    return np.where(inside, 1.0 - np.abs(theta_deg - delta_deg) / 50.0, 0.0)


def pendulum_step(theta, theta_dot, torque, params: PendulumParams = PendulumParams()):
    """One semi-implicit Euler step; operates on scalars or arrays."""
    a = np.clip(torque, -params.torque_limit, params.torque_limit)
    accel = (
        1.5 * params.gravity / params.length * np.sin(theta)
        + 3.0 / (params.mass * params.length**2) * a
    )
    new_theta_dot = np.clip(
        theta_dot + accel * params.dt,
        -params.angular_velocity_limit,
        params.angular_velocity_limit,
    )
    new_theta = wrap_angle(theta + new_theta_dot * params.dt)
    return new_theta, new_theta_dot


class PendulumEnv(EnvironmentInterface):
    """Episodic pendulum; emits (reward-oriented task signal, safety cost)."""

    def __init__(self, params: PendulumParams = PendulumParams()):
        self.params = params
        self._spec = CMDPSpec(
            state_dim=3,
            action_space=Box(lower=(-params.torque_limit,), upper=(params.torque_limit,)),
            gamma_c=params.gamma_c,
            gamma_l=params.gamma_l,
            budget_d=params.budget_d,
            horizon=params.horizon,
        )
        self._theta = np.pi
        self._theta_dot = 0.0
        self._t = 0

    @property
    def spec(self) -> CMDPSpec:
        return self._spec

    def _observation(self) -> np.ndarray:
        return np.array([np.cos(self._theta), np.sin(self._theta), self._theta_dot])

    def reset(self, seed: int) -> np.ndarray:
        rng = make_generator(seed)
        p = self.params
        self._theta = float(
            wrap_angle(np.pi + rng.uniform(-p.init_angle_halfwidth, p.init_angle_halfwidth))
        )
        self._theta_dot = float(
            rng.uniform(-p.init_velocity_halfwidth, p.init_velocity_halfwidth)
        )
        self._t = 0
        return self._observation()

    def step(self, action) -> tuple[np.ndarray, float, float, bool, dict]:
        torque = float(np.asarray(action).reshape(-1)[0])
        reward = float(pendulum_task_cost(self._theta, self._theta_dot, torque, self.params))
        new_theta, new_theta_dot = pendulum_step(self._theta, self._theta_dot, torque, self.params)
        safety = float(
            pendulum_safety_cost(np.degrees(new_theta), self.params.unsafe_angle_delta_deg)
        )
        self._theta = float(new_theta)
        self._theta_dot = float(new_theta_dot)
        self._t += 1
        done = self._t >= self.params.horizon
        return self._observation(), reward, safety, done, {}

    # Snapshot support for known-model planning.

    def snapshot(self) -> tuple[float, float, int]:
        return (self._theta, self._theta_dot, self._t)

    def restore(self, snap: tuple[float, float, int]) -> None:
        self._theta, self._theta_dot, self._t = snap

    def simulate_actions(self, snap, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batch rollout of candidate action sequences from a snapshot.

        actions has shape (N, H) or (N, H, 1); sequences are truncated to
        the steps remaining in the episode. Returns per-step task signals
        and safety costs, shape (N, H_eff), using exactly the arithmetic of
        step(), so simulated and live trajectories agree.
        """
        theta0, theta_dot0, t0 = snap
        acts = np.asarray(actions, dtype=float)
        if acts.ndim == 3:
            acts = acts[:, :, 0]
        n, h = acts.shape
        h_eff = min(h, self.params.horizon - t0)
        theta = np.full(n, theta0)
        theta_dot = np.full(n, theta_dot0)
        rewards = np.zeros((n, h_eff))
        safeties = np.zeros((n, h_eff))
        for k in range(h_eff):
            a = acts[:, k]
            rewards[:, k] = pendulum_task_cost(theta, theta_dot, a, self.params)
            theta, theta_dot = pendulum_step(theta, theta_dot, a, self.params)
            safeties[:, k] = pendulum_safety_cost(
                np.degrees(theta), self.params.unsafe_angle_delta_deg
            )
        return rewards, safeties
