"""Shared test doubles: tiny scripted environments and policies."""

from __future__ import annotations

import numpy as np
import pytest

from sautemdp.core import (
    Box,
    CMDPSpec,
    Discrete,
    EnvironmentInterface,
    PolicyInterface,
    make_generator,
)


class SequenceEnv(EnvironmentInterface):
    """Emits scripted (task_cost, safety_cost) pairs; observation is the
    step counter. Never terminates on its own unless `episode_len` is set."""

    def __init__(
        self,
        task_costs,
        safety_costs,
        gamma_c: float = 1.0,
        gamma_l: float = 1.0,
        budget_d: float = 10.0,
        horizon: int = 50,
        episode_len: int | None = None,
    ):
        self.task_costs = list(task_costs)
        self.safety_costs = list(safety_costs)
        self.episode_len = episode_len
        self._t = 0
        self._spec = CMDPSpec(
            state_dim=1,
            action_space=Discrete(2),
            gamma_c=gamma_c,
            gamma_l=gamma_l,
            budget_d=budget_d,
            horizon=horizon,
        )

    @property
    def spec(self):
        return self._spec

    def reset(self, seed: int):
        self._t = 0
        return np.array([0.0])

    def step(self, action):
        i = min(self._t, len(self.task_costs) - 1)
        task = self.task_costs[i]
        safety = self.safety_costs[i]
        self._t += 1
        done = self.episode_len is not None and self._t >= self.episode_len
        return np.array([float(self._t)]), task, safety, done, {}


class NoisyEnv(EnvironmentInterface):
    """Random nonnegative safety costs; used for randomized-property runs."""

    def __init__(self, gamma_l: float = 1.0, budget_d: float = 5.0, horizon: int = 20):
        self._rng = make_generator(0)
        self._t = 0
        self._spec = CMDPSpec(
            state_dim=1,
            action_space=Discrete(2),
            gamma_c=0.99,
            gamma_l=gamma_l,
            budget_d=budget_d,
            horizon=horizon,
        )

    @property
    def spec(self):
        return self._spec

    def reset(self, seed: int):
        self._rng = make_generator(seed)
        self._t = 0
        return np.array([0.0])

    def step(self, action):
        task = float(self._rng.random())
        safety = float(self._rng.random())
        self._t += 1
        return np.array([float(self._t)]), task, safety, False, {}


class ZeroPolicy(PolicyInterface):
    def act(self, observation):
        return 0


class RandomDiscretePolicy(PolicyInterface):
    def __init__(self, n_actions: int = 2):
        self.n_actions = n_actions
        self._rng = make_generator(0)

    def reset(self, seed: int):
        self._rng = make_generator(seed)

    def act(self, observation):
        return int(self._rng.integers(self.n_actions))


@pytest.fixture
def zero_policy():
    return ZeroPolicy()
