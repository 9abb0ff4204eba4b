"""Safety-budget-augmented MDP engine.

Wraps constrained environments with a tracked safety state, reshapes costs
so that budget violations are penalized in-objective, solves the augmented
problem exactly on tabular instances, and evaluates planners, learners,
and a Lagrangian baseline under a seeded, reproducible protocol.
"""

__version__ = "0.1.0"

from .core import (
    Box,
    CMDPSpec,
    Discrete,
    EnvironmentInterface,
    NegativeSafetyCostError,
    PolicyInterface,
    RolloutError,
    TrajectoryRecord,
    TrajectoryStep,
    discounted_task_return,
    prefix_constraint_equivalence,
    rollout,
    safety_margin,
)
from .saute import (
    Fixed,
    ObjectiveMode,
    SauteConfig,
    SauteEnv,
    SauteState,
    UniformInterval,
    reshape_cost,
    safety_step,
    strip_augmentation,
)

__all__ = [
    "__version__",
    "Box",
    "CMDPSpec",
    "Discrete",
    "EnvironmentInterface",
    "NegativeSafetyCostError",
    "PolicyInterface",
    "RolloutError",
    "TrajectoryRecord",
    "TrajectoryStep",
    "discounted_task_return",
    "prefix_constraint_equivalence",
    "rollout",
    "safety_margin",
    "Fixed",
    "ObjectiveMode",
    "SauteConfig",
    "SauteEnv",
    "SauteState",
    "UniformInterval",
    "reshape_cost",
    "safety_step",
    "strip_augmentation",
]
