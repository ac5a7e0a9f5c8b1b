"""Symbolic layer: factored beliefs, observation discretization, and
backward-chaining action selection with alternative-plan enumeration.

Plans are built backward from the desired state over pre/postcondition action
templates. Each complete plan gets a posterior weight exp(-length - penalty)
where the penalty counts preconditions currently believed false; the first
action of the most likely plan is the planner's output. Alternative plans are
enumerated by re-running the selection while removing each chosen first action
from the available set, which yields every distinct executable first step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from mmtamp.costs import CostWeights, planar_ori_metric, ori_metric_batch

DEPTH_CAP = 10
MAX_PLANS = 64


class DomainError(Exception):
    pass


@dataclass
class StateFactor:
    """One independent symbolic state: a belief over mutually exclusive values."""

    name: str
    values: list[str]
    belief: np.ndarray = None

    def __post_init__(self) -> None:
        if self.belief is None:
            self.belief = np.full(len(self.values), 1.0 / len(self.values))
        self.belief = np.asarray(self.belief, dtype=np.float64)

    @property
    def logical_index(self) -> int:
        # Deterministic tie-break: lowest index wins.
        return int(np.argmax(self.belief))

    def logical(self) -> np.ndarray:
        one_hot = np.zeros_like(self.belief)
        one_hot[self.logical_index] = 1.0
        return one_hot


@dataclass(frozen=True)
class Observation:
    factor: str
    value: int


@dataclass
class ActionTemplate:
    """A symbolic skill with first-order pre/postconditions on factor values."""

    name: str
    cost_key: str
    preconditions: list[tuple[str, int]] = field(default_factory=list)
    postconditions: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.postconditions:
            raise DomainError(f"action '{self.name}' has no postconditions")


@dataclass
class PlanList:
    """Ranked alternative plans; each plan is a list of ActionTemplate."""

    plans: list[list[ActionTemplate]]
    weights: np.ndarray

    @property
    def selected(self) -> int:
        return int(np.argmax(self.weights)) if len(self.plans) else -1

    def first_actions(self) -> list[ActionTemplate]:
        return [plan[0] for plan in self.plans]


# ---------------------------------------------------------------------------
# Belief update
# ---------------------------------------------------------------------------

def update_belief(factor: StateFactor, obs: Observation, confidence: float) -> StateFactor:
    """Multiplicative belief update toward the observed value.

    The observed entry is scaled by `confidence`, the others share (1 -
    confidence); the result is renormalized. confidence must lie in (0.5, 1].
    """
    if obs.factor != factor.name or obs.value >= len(factor.values):
        raise ValueError(f"observation {obs} does not match factor '{factor.name}'")
    if not 0.5 < confidence <= 1.0:
        raise ValueError("confidence must lie in (0.5, 1]")
    m = len(factor.values)
    like = np.full(m, (1.0 - confidence) / (m - 1) if m > 1 else 1.0)
    like[obs.value] = confidence
    posterior = factor.belief * like
    total = posterior.sum()
    if total <= 0.0:  # chained certainty updates can zero out the posterior
        posterior = like.copy()
        total = posterior.sum()
    return StateFactor(factor.name, factor.values, posterior / total)


# ---------------------------------------------------------------------------
# Backward-chaining plan search
# ---------------------------------------------------------------------------

def _achieve(
    goals: list[tuple[str, int]],
    state: dict[str, int],
    templates: list[ActionTemplate],
    depth: int,
    out_cap: int,
) -> list[tuple[list[ActionTemplate], dict[str, int]]]:
    """All action sequences that make every goal hold, with the resulting state."""
    if not goals:
        return [([], state)]
    (factor, value), rest = goals[0], goals[1:]
    if state.get(factor) == value:
        return _achieve(rest, state, templates, depth, out_cap)
    if depth <= 0:
        return []
    results = []
    for tmpl in templates:
        if (factor, value) not in tmpl.postconditions:
            continue
        for pre_plan, pre_state in _achieve(
            list(tmpl.preconditions), state, templates, depth - 1, out_cap
        ):
            new_state = dict(pre_state)
            for f, v in tmpl.postconditions:
                new_state[f] = v
            for rest_plan, rest_state in _achieve(rest, new_state, templates, depth - 1, out_cap):
                results.append((pre_plan + [tmpl] + rest_plan, rest_state))
                if len(results) >= out_cap:
                    return results
    return results


def _plan_weight(plan: list[ActionTemplate], factors: dict[str, StateFactor]) -> float:
    penalty = 0
    for action in plan:
        for f, v in action.preconditions:
            if factors[f].belief[v] < 0.5:
                penalty += 1
    return float(np.exp(-len(plan) - penalty))


def _select_plan(
    factors: dict[str, StateFactor],
    desired: dict[str, int],
    templates: list[ActionTemplate],
) -> tuple[list[ActionTemplate], float] | None:
    logical = {name: f.logical_index for name, f in factors.items()}
    goals = [(f, v) for f, v in desired.items() if logical.get(f) != v]
    if not goals:
        return None
    found = _achieve(goals, logical, templates, DEPTH_CAP, MAX_PLANS)
    if not found:
        return None
    weights = np.array([_plan_weight(plan, factors) for plan, _ in found])
    best = int(np.argmax(weights))  # ties: template declaration order
    return found[best][0], float(weights[best])


def act_sel(
    factors: dict[str, StateFactor],
    desired: dict[str, int],
    templates: list[ActionTemplate],
) -> ActionTemplate | None:
    """First action of the most likely plan toward the desired state, or None."""
    result = _select_plan(factors, desired, templates)
    return result[0][0] if result else None


def parallel_act_sel(
    factors: dict[str, StateFactor],
    desired: dict[str, int],
    templates: list[ActionTemplate],
) -> PlanList:
    """Enumerate alternative plans by re-selecting with each first action removed."""
    available = list(templates)
    plans: list[list[ActionTemplate]] = []
    weights: list[float] = []
    while True:
        result = _select_plan(factors, desired, available)
        if result is None:
            break
        plan, weight = result
        plans.append(plan)
        weights.append(weight)
        available.remove(plan[0])
    w = np.asarray(weights, dtype=np.float64)
    if w.size:
        w = w / w.sum()
    return PlanList(plans=plans, weights=w)


def simulate_plan(
    logical: dict[str, int],
    plan: list[ActionTemplate],
    desired: dict[str, int],
) -> bool:
    """Symbolically execute a plan: preconditions must hold at each step and the
    desired state must hold at the end."""
    state = dict(logical)
    for action in plan:
        for f, v in action.preconditions:
            if state.get(f) != v:
                return False
        for f, v in action.postconditions:
            state[f] = v
    return all(state.get(f) == v for f, v in desired.items())


def multi_modal_reach_expansion(
    action: ActionTemplate, grasp_modes: list[float] | None = None
) -> list[tuple[str, dict]]:
    """Expand a reach action into one cost parameterization per grasp mode.

    Side grasp (psi=0) and top grasp (psi=1) are sampled as parallel plan modes;
    non-reach actions pass through unchanged.
    """
    if action.cost_key != "reach":
        return [(action.cost_key, {})]
    modes = [0.0, 1.0] if grasp_modes is None else [float(m) for m in grasp_modes]
    return [("reach", {"psi": m}) for m in modes]


# ---------------------------------------------------------------------------
# Symbolic observers
# ---------------------------------------------------------------------------

def observe_planar(batch, thresholds: dict[str, float], sample: int = 0) -> dict[str, int]:
    """Discretize the planar state: o[goal] = 0 iff object is at the goal."""
    delta = thresholds.get("goal", 0.35)
    dist = float(np.linalg.norm(batch.goal_pos - batch.obj_pos[sample]))
    return {"goal": 0 if dist <= delta else 1}


def observe_gripper(
    batch,
    thresholds: dict[str, float],
    weights: CostWeights | None = None,
    sample: int = 0,
) -> dict[str, int]:
    """Discretize the gripper state into reach / hold / preplace / placed."""
    weights = weights or CostWeights()
    lay = batch.layout
    target = lay.target_cube
    obs: dict[str, int] = {}

    d_reach = float(
        np.linalg.norm(batch.ee_pos[sample] - batch.cube_pos[sample, target])
    )
    obs["reach"] = 0 if d_reach <= thresholds.get("reach", 0.02) else 1

    hold_tol = thresholds.get("hold", lay.hold_tol)
    f = float(batch.fingers[sample])
    holding = (lay.cube_size - hold_tol <= f < lay.cube_size + hold_tol)
    obs["hold"] = 0 if holding else 1

    for stage in ("preplace", "placed"):
        pose_stage = "preplace" if stage == "preplace" else "place"
        pos, rot = batch.stage_pose(pose_stage)
        delta = thresholds.get(stage, 0.05)
        c_dist = weights.dist * float(
            np.linalg.norm(batch.cube_pos[sample, target] - pos[sample])
        )
        c_ori = weights.ori * float(
            ori_metric_batch(batch.cube_rot[sample, target], rot[sample])
        )
        obs[stage] = 0 if (c_dist < delta and c_ori < delta) else 1
    return obs


# ---------------------------------------------------------------------------
# Domain files
# ---------------------------------------------------------------------------

def load_domain(path: str | Path) -> tuple[dict[str, StateFactor], list[ActionTemplate]]:
    """Read factor and action-template definitions from a YAML domain file."""
    with open(path) as handle:
        raw = yaml.safe_load(handle)
    if not isinstance(raw, dict) or "factors" not in raw or "actions" not in raw:
        raise DomainError(f"domain file {path} must define 'factors' and 'actions'")
    factors: dict[str, StateFactor] = {}
    for name, values in raw["factors"].items():
        if not isinstance(values, list) or len(values) < 2:
            raise DomainError(f"factor '{name}' needs at least two values")
        factors[name] = StateFactor(name=name, values=[str(v) for v in values])

    def resolve(factor: str, value: str) -> tuple[str, int]:
        if factor not in factors:
            raise DomainError(f"unknown factor '{factor}'")
        if value not in factors[factor].values:
            raise DomainError(f"factor '{factor}' has no value '{value}'")
        return factor, factors[factor].values.index(value)

    templates = []
    for item in raw["actions"]:
        templates.append(
            ActionTemplate(
                name=item["name"],
                cost_key=item.get("cost_key", item["name"]),
                preconditions=[resolve(f, v) for f, v in item.get("pre", [])],
                postconditions=[resolve(f, v) for f, v in item.get("post", [])],
            )
        )
    return factors, templates


def resolve_desired(
    desired_raw: dict[str, str], factors: dict[str, StateFactor]
) -> dict[str, int]:
    desired = {}
    for factor, value in desired_raw.items():
        if factor not in factors:
            raise DomainError(f"desired state names unknown factor '{factor}'")
        if value not in factors[factor].values:
            raise DomainError(f"factor '{factor}' has no value '{value}'")
        desired[factor] = factors[factor].values.index(value)
    return desired
