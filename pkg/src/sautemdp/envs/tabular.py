"""Episodic environment view of a tabular constrained MDP.

Lets solver fixtures run through the rollout/evaluation machinery (and the
budget wrapper) exactly like native environments: transitions are sampled
from the tensor rows with a seeded generator, costs come from the current
(state, action) entry, and episodes truncate at the fixture's horizon.
"""

from __future__ import annotations

import numpy as np

from ..core import CMDPSpec, Discrete, EnvironmentInterface, make_generator
from ..solver import FiniteCMDP

__all__ = ["FiniteCMDPEnv"]


class FiniteCMDPEnv(EnvironmentInterface):
    def __init__(self, cmdp: FiniteCMDP):
        self.cmdp = cmdp
        self._spec = CMDPSpec(
            state_dim=1,
            action_space=Discrete(cmdp.num_actions),
            gamma_c=cmdp.gamma_c,
            gamma_l=cmdp.gamma_l,
            budget_d=cmdp.budget_d,
            horizon=cmdp.horizon,
        )
        self._state = cmdp.initial_state
        self._t = 0
        self._rng = make_generator(0)

    @property
    def spec(self) -> CMDPSpec:
        return self._spec

    @property
    def state_index(self) -> int:
        return self._state

    def reset(self, seed: int) -> np.ndarray:
        self._rng = make_generator(seed)
        self._state = self.cmdp.initial_state
        self._t = 0
        return np.array([float(self._state)])

    def step(self, action) -> tuple[np.ndarray, float, float, bool, dict]:
        a = int(action)
        if not 0 <= a < self.cmdp.num_actions:
            raise ValueError(f"action {a} out of range")
        s = self._state
        task = float(self.cmdp.task_cost[s, a])
        safety = float(self.cmdp.safety_cost[s, a])
        self._state = int(self._rng.choice(self.cmdp.num_states, p=self.cmdp.transition[s, a]))
        self._t += 1
        done = self._t >= self.cmdp.horizon
        return np.array([float(self._state)]), task, safety, done, {}
