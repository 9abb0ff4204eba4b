"""Documented tabular fixtures for the exact solvers and theorem checks.

Three families, addressed by name:

``risky-chain``
    3 states x 2 actions, stochastic, minimize-cost orientation,
    gamma_c = 0.95, gamma_l = 1, budget 1, horizon 8. Action 0 is the
    risky move (unit safety cost, cheap task costs), action 1 the safe one
    (free of safety cost, more expensive). With budget 1 a safe policy may
    spend one risky credit; a uniformly random policy overspends almost
    every episode. Tensors:

        transition[s, 0] rows: s0 -> [.2 .8 .0], s1 -> [.3 .7 .0],
                               s2 -> [.0 .6 .4]
        transition[s, 1] rows: s0 -> [.0 .0 1.], s1 -> [.0 .0 1.],
                               s2 -> [.0 .0 1.]
        task_cost   [[0.2 0.6] [0.0 0.5] [0.1 0.5]]
        safety_cost [[1   0  ] [1   0  ] [1   0  ]]

``two-corridor``
    The patrol gridworld compiled from start B (hazard corridor adjacent),
    cost orientation (task cost = -reward): see
    envs.gridworld.two_corridor_params for the layout and arithmetic.

``tiny-random(<seed>)``
    Seeded random stochastic instance (<= 5 states, <= 3 actions), integer
    safety costs with action 0 always safe, so a feasible policy exists by
    construction.

All fixtures use gamma_l = 1 and integer safety costs so integer z-grids
represent the safety dynamics exactly (no interpolation error in oracle
comparisons).
"""

from __future__ import annotations

import re

import numpy as np

from ..core import make_generator
from ..solver import FiniteCMDP
from .gridworld import GridworldEnv, two_corridor_params

__all__ = ["make_fixture", "random_deterministic_cmdp"]


def _risky_chain() -> FiniteCMDP:
    transition = np.zeros((3, 2, 3))
    transition[0, 0] = [0.2, 0.8, 0.0]
    transition[1, 0] = [0.3, 0.7, 0.0]
    transition[2, 0] = [0.0, 0.6, 0.4]
    transition[0, 1] = [0.0, 0.0, 1.0]
    transition[1, 1] = [0.0, 0.0, 1.0]
    transition[2, 1] = [0.0, 0.0, 1.0]
    task_cost = np.array([[0.2, 0.6], [0.0, 0.5], [0.1, 0.5]])
    safety_cost = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    return FiniteCMDP(
        num_states=3,
        num_actions=2,
        transition=transition,
        task_cost=task_cost,
        safety_cost=safety_cost,
        gamma_c=0.95,
        gamma_l=1.0,
        budget_d=1.0,
        horizon=8,
        initial_state=0,
    )


def _two_corridor() -> FiniteCMDP:
    params = two_corridor_params()
    env = GridworldEnv(params)
    return env.to_finite_cmdp(start=(0, 2), task_sign=-1.0)


def _tiny_random(seed: int) -> FiniteCMDP:
    rng = make_generator(seed)
    S = int(rng.integers(3, 6))
    A = int(rng.integers(2, 4))
    raw = rng.random((S, A, S)) + 0.05
    transition = raw / raw.sum(axis=2, keepdims=True)
    task_cost = np.round(rng.random((S, A)), 3)
    safety_cost = rng.integers(0, 2, size=(S, A)).astype(float)
    safety_cost[:, 0] = 0.0  # action 0 is always safe: feasibility guaranteed
    return FiniteCMDP(
        num_states=S,
        num_actions=A,
        transition=transition,
        task_cost=task_cost,
        safety_cost=safety_cost,
        gamma_c=0.9,
        gamma_l=1.0,
        budget_d=2.0,
        horizon=8,
        initial_state=0,
    )


_TINY_RANDOM_RE = re.compile(r"^tiny-random\((\d+)\)$")


def make_fixture(name: str) -> FiniteCMDP:
    """Build a documented fixture by name; same name, same tensors."""
    if name == "risky-chain":
        return _risky_chain()
    if name == "two-corridor":
        return _two_corridor()
    match = _TINY_RANDOM_RE.match(name)
    if match:
        return _tiny_random(int(match.group(1)))
    raise ValueError(
        f"unknown fixture {name!r}; expected risky-chain, two-corridor, or tiny-random(<seed>)"
    )


def random_deterministic_cmdp(seed: int) -> FiniteCMDP:
    """Random deterministic instance for oracle cross-checks.

    Integer safety costs in {0, 1, 2}, budget in {0..4}, gamma_l = 1 and
    task discounts bounded away from zero so a large reshape penalty stays
    separated from feasible task values after discounting.
    """
    rng = make_generator(seed)
    S = int(rng.integers(2, 6))
    A = int(rng.integers(2, 4))
    horizon = int(rng.integers(3, 7))
    next_state = rng.integers(0, S, size=(S, A))
    transition = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            transition[s, a, next_state[s, a]] = 1.0
    task_cost = np.round(rng.random((S, A)), 4)
    safety_cost = rng.integers(0, 3, size=(S, A)).astype(float)
    return FiniteCMDP(
        num_states=S,
        num_actions=A,
        transition=transition,
        task_cost=task_cost,
        safety_cost=safety_cost,
        gamma_c=float(np.round(rng.uniform(0.5, 1.0), 3)),
        gamma_l=1.0,
        budget_d=float(rng.integers(0, 5)),
        horizon=horizon,
        initial_state=0,
    )
