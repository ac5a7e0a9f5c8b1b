"""Plan interface: maps the symbolic actions of a plan list to the cost
functions the controller samples against.

Every executable action name is registered in a cost database keyed by its
cost_key; a reach action expands into one spec per grasp mode so both modes are
explored as parallel plans.
"""

from __future__ import annotations

import numpy as np

from mmtamp.aip import ActionTemplate, PlanList, multi_modal_reach_expansion
from mmtamp.config import ScenarioConfig
from mmtamp.costs import (
    CostSpec,
    CostWeights,
    GripperDynObsTerm,
    GripperFingerTerm,
    GripperPoseTerm,
    GripperReachTerm,
    compose_pull,
    compose_push,
)


class CostKeyError(KeyError):
    pass


class PlanInterfaceError(Exception):
    pass


def build_cost_database(scenario: ScenarioConfig):
    """Builders from cost_key to CostSpec, bound to this scenario's entities."""
    w: CostWeights = scenario.weights
    n_dyn = len(scenario.layout.dynamic_obstacles)

    if scenario.world == "planar":
        return {
            "push": lambda params: compose_push(w, n_dyn),
            "pull": lambda params: compose_pull(w, n_dyn),
        }

    target = scenario.layout.target_cube

    def with_dyn(spec: CostSpec) -> CostSpec:
        if n_dyn:
            spec.terms.append(GripperDynObsTerm(w.dyn_obs))
        return spec

    def reach(params):
        psi = float(params.get("psi", 1.0))
        return with_dyn(
            CostSpec(
                key=f"reach_psi{psi:g}",
                terms=[GripperReachTerm(psi, w.reach, w.tilt, target)],
            )
        )

    return {
        "reach": reach,
        "pick": lambda params: with_dyn(
            CostSpec(key="pick", terms=[GripperFingerTerm("pick", w.gripper)])
        ),
        "preplace": lambda params: with_dyn(
            CostSpec(key="preplace", terms=[GripperPoseTerm("preplace", w.dist, w.ori, target)])
        ),
        "place": lambda params: with_dyn(
            CostSpec(key="place", terms=[GripperFingerTerm("place", w.gripper)])
        ),
    }


def plan_interface(
    plan_list: PlanList, database: dict, grasp_modes: list[float] | None = None
) -> list[CostSpec]:
    """One CostSpec per alternative plan's first action (reach expands per mode)."""
    if not plan_list.plans:
        raise PlanInterfaceError("no executable plan")
    specs: list[CostSpec] = []
    for action in plan_list.first_actions():
        for cost_key, params in multi_modal_reach_expansion(action, grasp_modes):
            if cost_key not in database:
                raise CostKeyError(
                    f"action '{action.name}' refers to unknown cost_key '{cost_key}'"
                )
            specs.append(database[cost_key](params))
    return specs


def evaluate_current_cost(spec: CostSpec, world, control_dim: int) -> float:
    """Current cost of one spec on the live world (zero command), for traces."""
    zero = np.zeros((world.size, control_dim))
    return float(spec.evaluate(world, zero)[0])
