"""Gridworld with hazard cells whose shortcut value correlates task return
with incurred safety cost.

The canonical two-corridor layout routes a patrol task (reach the goal,
collect a delivery reward, teleport back to the episode's start) through
either a short corridor lined with hazard cells or a longer hazard-free
detour. Episodes start from one of several start cells, which is what
gives budget-blind baselines their per-episode variance: a policy may
patrol safely from one start and through the hazards from another.

Costs are landed-cell based: after the move resolves (including slip), the
occupied cell's hazard value is the step's safety cost and its reward value
is the step's task signal. Moves into walls or off the grid stay in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import CMDPSpec, Discrete, EnvironmentInterface, make_generator
from ..solver import FiniteCMDP

__all__ = ["GridworldParams", "GridworldEnv", "two_corridor_params"]

# Action encoding: up, down, left, right (row/col deltas).
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
# Lateral slip directions for each action (perpendicular pair).
_LATERAL = ((2, 3), (2, 3), (0, 1), (0, 1))


@dataclass(frozen=True)
class GridworldParams:
    width: int
    height: int
    start_cells: tuple[tuple[int, int], ...]  # (col, row)
    goal_cells: tuple[tuple[int, int], ...]
    hazard: dict[tuple[int, int], float] = field(default_factory=dict)
    reward: dict[tuple[int, int], float] = field(default_factory=dict)
    walls: frozenset[tuple[int, int]] = frozenset()
    slip_probability: float = 0.0
    goal_teleports_to_start: bool = True
    horizon: int = 32
    gamma_c: float = 1.0
    gamma_l: float = 1.0
    budget_d: float = 11.0

    def __post_init__(self):
        if not 0.0 <= self.slip_probability < 1.0:
            raise ValueError("slip_probability must lie in [0, 1)")
        if not self.start_cells:
            raise ValueError("at least one start cell required")
        if any(v < 0.0 for v in self.hazard.values()):
            raise ValueError("hazard costs must be nonnegative")
        for cell in (*self.start_cells, *self.goal_cells):
            if not (0 <= cell[0] < self.width and 0 <= cell[1] < self.height):
                raise ValueError(f"cell {cell} outside the grid")

    @property
    def num_cells(self) -> int:
        return self.width * self.height

    def cell_index(self, cell: tuple[int, int]) -> int:
        return cell[1] * self.width + cell[0]

    def index_cell(self, idx: int) -> tuple[int, int]:
        return (idx % self.width, idx // self.width)


def two_corridor_params(
    budget_d: float = 12.9,
    horizon: int = 34,
    slip_probability: float = 0.0,
) -> GridworldParams:
    """Patrol layout with a mild corridor and a heavier corridor.

    7 x 3 grid. Starts: A = (0, 0) and B = (0, 2), drawn uniformly at
    reset. Goal T = (6, 1) pays a delivery reward of 1 and teleports the
    agent back to its episode start. Interior middle-row cells are walls.

        A  k  k  k  k  k  .        row 0, k = hazard 0.4
        .  #  #  #  #  #  T        row 1
        B  h  h  h  h  h  .        row 2, h = hazard 0.6

    Trip arithmetic (7 moves along a row plus the turn into T; 9 moves when
    detouring through the other row):

        from A, top lane:     7 moves, safety 2.0 per trip
        from B, bottom lane:  7 moves, safety 3.0 per trip
        from B via top lane:  9 moves, safety 2.0 per trip

    Horizon 34 fits 4 same-lane deliveries (28 moves) with 6 spare moves
    that a nonstop patroller spends on a fifth partial trip, so a
    budget-blind stationary patroller incurs 10.0 per episode from A and
    15.0 from B. At the default budget 12.9 that is safe on average while
    violating in every B-episode. A budget-aware patroller from B stops
    after its 4 bottom trips (safety 12.0) or mixes lanes, staying within
    budget from both starts. All reachable safety totals are multiples of
    0.2, so the default budget keeps a 0.1 margin to every achievable
    total.
    """
    walls = frozenset((c, 1) for c in range(1, 6))
    hazard = {(c, 0): 0.4 for c in range(1, 6)}
    hazard.update({(c, 2): 0.6 for c in range(1, 6)})
    reward = {(6, 1): 1.0}
    return GridworldParams(
        width=7,
        height=3,
        start_cells=((0, 0), (0, 2)),
        goal_cells=((6, 1),),
        hazard=hazard,
        reward=reward,
        walls=walls,
        slip_probability=slip_probability,
        goal_teleports_to_start=True,
        horizon=horizon,
        budget_d=budget_d,
    )


class GridworldEnv(EnvironmentInterface):
    """Episodic gridworld; task signal is reward-oriented (deliveries)."""

    def __init__(self, params: GridworldParams):
        self.params = params
        self._spec = CMDPSpec(
            state_dim=2,
            action_space=Discrete(4),
            gamma_c=params.gamma_c,
            gamma_l=params.gamma_l,
            budget_d=params.budget_d,
            horizon=params.horizon,
        )
        self._cell: tuple[int, int] = params.start_cells[0]
        self._episode_start: tuple[int, int] = params.start_cells[0]
        self._t = 0
        self._rng = make_generator(0)

    @property
    def spec(self) -> CMDPSpec:
        return self._spec

    @property
    def cell(self) -> tuple[int, int]:
        return self._cell

    @property
    def state_index(self) -> int:
        return self.params.cell_index(self._cell)

    def _observation(self) -> np.ndarray:
        return np.array([float(self._cell[0]), float(self._cell[1])])

    def reset(self, seed: int) -> np.ndarray:
        self._rng = make_generator(seed)
        starts = self.params.start_cells
        self._episode_start = starts[int(self._rng.integers(len(starts)))]
        self._cell = self._episode_start
        self._t = 0
        return self._observation()

    def _resolve_move(self, cell: tuple[int, int], action: int) -> tuple[int, int]:
        dcol = _MOVES[action][1]
        drow = _MOVES[action][0]
        target = (cell[0] + dcol, cell[1] + drow)
        p = self.params
        if not (0 <= target[0] < p.width and 0 <= target[1] < p.height):
            return cell
        if target in p.walls:
            return cell
        return target

    def step(self, action) -> tuple[np.ndarray, float, float, bool, dict]:
        action = int(action)
        if not 0 <= action < 4:
            raise ValueError(f"action {action} outside Discrete(4)")
        p = self.params
        if p.slip_probability > 0.0:
            u = self._rng.random()
            if u < p.slip_probability:
                lateral = _LATERAL[action]
                action = lateral[0] if u < p.slip_probability / 2.0 else lateral[1]
        landed = self._resolve_move(self._cell, action)
        reward = float(p.reward.get(landed, 0.0))
        safety = float(p.hazard.get(landed, 0.0))
        if landed in p.goal_cells and p.goal_teleports_to_start:
            landed = self._episode_start
            done_goal = False
        else:
            done_goal = landed in p.goal_cells
        self._cell = landed
        self._t += 1
        done = done_goal or self._t >= p.horizon
        return self._observation(), reward, safety, done, {"cell": self._cell}

    def snapshot(self):
        return (self._cell, self._episode_start, self._t, self._rng.bit_generator.state)

    def restore(self, snap) -> None:
        self._cell, self._episode_start, self._t, rng_state = snap
        self._rng = make_generator(0)
        self._rng.bit_generator.state = rng_state

    def to_finite_cmdp(
        self,
        start: tuple[int, int] | None = None,
        task_sign: float = 1.0,
        penalty_lambda: float = 0.0,
    ) -> FiniteCMDP:
        """Compile to tensors for exact solving.

        The compiled task cost is task_sign * reward + penalty_lambda *
        hazard, both in expectation over slip outcomes; pass task_sign = -1
        to hand a reward-oriented grid to the cost-minimizing solver.
        Teleporting goals map to the given start cell, so the compiled
        chain is start-specific.
        """
        p = self.params
        start = start if start is not None else p.start_cells[0]
        start_idx = p.cell_index(start)
        S, A = p.num_cells, 4
        P = np.zeros((S, A, S))
        task = np.zeros((S, A))
        safety = np.zeros((S, A))
        for s in range(S):
            cell = p.index_cell(s)
            for a in range(A):
                outcomes = [(a, 1.0 - p.slip_probability)]
                if p.slip_probability > 0.0:
                    for lat in _LATERAL[a]:
                        outcomes.append((lat, p.slip_probability / 2.0))
                for actual, prob in outcomes:
                    landed = self._resolve_move(cell, actual)
                    r = p.reward.get(landed, 0.0)
                    h = p.hazard.get(landed, 0.0)
                    if landed in p.goal_cells and p.goal_teleports_to_start:
                        landed = start
                    P[s, a, p.cell_index(landed)] += prob
                    task[s, a] += prob * (task_sign * r + penalty_lambda * h)
                    safety[s, a] += prob * h
        return FiniteCMDP(
            num_states=S,
            num_actions=A,
            transition=P,
            task_cost=task,
            safety_cost=safety,
            gamma_c=p.gamma_c,
            gamma_l=p.gamma_l,
            budget_d=p.budget_d,
            horizon=p.horizon,
            initial_state=start_idx,
        )
