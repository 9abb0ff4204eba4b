"""Native constrained environments and tabular fixtures."""

from .fixtures import make_fixture, random_deterministic_cmdp
from .gridworld import GridworldEnv, GridworldParams, two_corridor_params
from .pendulum import (
    PendulumEnv,
    PendulumParams,
    pendulum_safety_cost,
    pendulum_step,
    pendulum_task_cost,
)
from .tabular import FiniteCMDPEnv

__all__ = [
    "make_fixture",
    "random_deterministic_cmdp",
    "GridworldEnv",
    "GridworldParams",
    "two_corridor_params",
    "PendulumEnv",
    "PendulumParams",
    "pendulum_safety_cost",
    "pendulum_step",
    "pendulum_task_cost",
    "FiniteCMDPEnv",
]
