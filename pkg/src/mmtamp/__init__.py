"""Multi-modal sampling-based MPC fused with a symbolic action planner.

A controller keeps one sampling distribution per alternative symbolic plan,
weights rollouts by exponentiated negative cost with auto-tuned temperatures,
and blends all plan modes into a single command; a backward-chaining planner
over factored beliefs supplies the alternatives and reacts to disturbances.
"""

from mmtamp.controller import (
    ControllerConfig,
    ControllerState,
    blend_global,
    discounted_cost,
    importance_weights,
    m3p2i_iteration,
    per_plan_mean,
    shift_warm_start,
    update_inverse_temperature,
)
from mmtamp.costs import CostSpec, CostWeights, ori_metric
from mmtamp.halton import SplineNoiseConfig, halton_point, sample_noise
from mmtamp.rng import seeded_rng

__all__ = [
    "ControllerConfig",
    "ControllerState",
    "CostSpec",
    "CostWeights",
    "SplineNoiseConfig",
    "blend_global",
    "discounted_cost",
    "halton_point",
    "importance_weights",
    "m3p2i_iteration",
    "ori_metric",
    "per_plan_mean",
    "sample_noise",
    "seeded_rng",
    "shift_warm_start",
    "update_inverse_temperature",
]

__version__ = "0.1.0"
