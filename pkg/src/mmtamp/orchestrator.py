"""Trial execution: wires observers, the symbolic planner, the plan interface,
and the multi-modal controller at their respective rates against one live world
instance, applies scripted disturbances, and emits per-tick trace records plus
a trial summary.

Simulated time is tick-driven: the planner refreshes every `ticks_per_plan`
controller ticks (the 1 Hz / 25 Hz split becomes a tick ratio), so runs are
fully deterministic under a fixed seed.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass

import numpy as np

from mmtamp.aip import (
    Observation,
    observe_gripper,
    observe_planar,
    load_domain,
    parallel_act_sel,
    resolve_desired,
    update_belief,
)
from mmtamp.config import ScenarioConfig
from mmtamp.controller import ControllerState, m3p2i_iteration
from mmtamp.costs import planar_ori_metric, ori_metric_batch
from mmtamp.interface import build_cost_database, evaluate_current_cost, plan_interface
from mmtamp.worlds.gripper import GripperBatch, apply_gripper_disturbance
from mmtamp.worlds.planar import PlanarBatch, apply_planar_disturbance


@dataclass
class TrialSummary:
    """Outcome of one trial."""

    success: bool
    pos_error: float
    ori_error: float
    completion_time: float | None  # simulated seconds; None on time-out
    ticks: int
    seed: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def make_world(scenario: ScenarioConfig):
    if scenario.world == "planar":
        return PlanarBatch(scenario.layout, size=1)
    return GripperBatch(scenario.layout, size=1)


def _apply_disturbance(world, event: dict) -> None:
    if isinstance(world, PlanarBatch):
        apply_planar_disturbance(world, event)
    else:
        apply_gripper_disturbance(world, event)


def _observe(scenario: ScenarioConfig, world) -> dict[str, int]:
    if scenario.world == "planar":
        return observe_planar(world, scenario.thresholds)
    return observe_gripper(world, scenario.thresholds, scenario.weights)


def _errors(scenario: ScenarioConfig, world) -> tuple[float, float]:
    """(position error, orientation error) of the task object vs its target."""
    if scenario.world == "planar":
        pos = float(np.linalg.norm(world.goal_pos - world.obj_pos[0]))
        ori = float(planar_ori_metric(world.obj_yaw[0], world.goal_yaw))
        return pos, ori
    target = scenario.layout.target_cube
    place_pos, place_rot = world.stage_pose("place")
    pos = float(np.linalg.norm(world.cube_pos[0, target] - place_pos[0]))
    ori = float(ori_metric_batch(world.cube_rot[0, target], place_rot[0]))
    return pos, ori


def _success_now(scenario: ScenarioConfig, world, obs: dict[str, int]) -> bool:
    # Gripper success requires the grasp to be released, not just the pose to
    # match: a held cube at the place pose does not count.
    if scenario.world == "planar":
        return obs["goal"] == 0
    return obs["placed"] == 0 and int(world.attached[0]) < 0


def _set_planar_suction(world: PlanarBatch, dominant_policy: str) -> None:
    """Engage/release the real robot's suction per the dominant plan mode."""
    if dominant_policy == "auto":
        if not world.attached[0]:
            world.set_suction(True)
    elif dominant_policy == "detach":
        if world.attached[0]:
            world.set_suction(False)


def run_trial(
    scenario: ScenarioConfig,
    seed: int,
    mode: str = "multimodal",
    trace_file=None,
    realtime: bool = False,
):
    """Run one closed-loop trial; returns (TrialSummary, trace records).

    mode filters the plan list to a single skill ("push"/"pull") or keeps all
    alternatives ("multimodal"). Trace records are returned as dicts and, when
    trace_file is given, streamed to it as newline-delimited JSON.
    """
    cfg = dataclasses.replace(scenario.controller, seed=seed)
    world = make_world(scenario)
    factors, templates = load_domain(scenario.domain_path)
    desired = resolve_desired(scenario.desired_raw, factors)
    database = build_cost_database(scenario)
    state = ControllerState(cfg, world.layout.control_dim)

    schedule = sorted(scenario.disturbances, key=lambda d: float(d.get("time", 0.0)))
    next_event = 0
    specs = []
    plan_actions: list[str] = []
    plan_first: list[str] = []
    hold = 0
    records: list[dict] = []
    max_ticks = int(np.ceil(scenario.timeout / cfg.dt))
    success_tick = None
    wall_start = time.monotonic()

    for tick in range(max_ticks):
        t = tick * cfg.dt
        while next_event < len(schedule) and float(schedule[next_event]["time"]) <= t + 1e-9:
            _apply_disturbance(world, schedule[next_event])
            next_event += 1

        obs = _observe(scenario, world)

        if tick % scenario.ticks_per_plan == 0:
            for name, value in obs.items():
                factors[name] = update_belief(
                    factors[name], Observation(name, value), scenario.confidence
                )
            plan_list = parallel_act_sel(factors, desired, templates)
            if mode != "multimodal":
                keep = [
                    i for i, p in enumerate(plan_list.plans) if p[0].name == mode
                ]
                plan_list.plans = [plan_list.plans[i] for i in keep]
                plan_list.weights = (
                    plan_list.weights[keep] / plan_list.weights[keep].sum()
                    if keep
                    else plan_list.weights[:0]
                )
            if plan_list.plans:
                specs = plan_interface(plan_list, database, scenario.grasp_modes)
                sel = plan_list.selected
                plan_actions = [a.name for a in plan_list.plans[sel]]
                plan_first = [p[0].name for p in plan_list.plans]
            else:
                specs = []
                plan_actions = []
                plan_first = []

        if specs:
            command, diag = m3p2i_iteration(state, world, specs, cfg)
            if scenario.world == "planar":
                masses = [p["weight_mass"] for p in diag["plans"]]
                dominant = state.slots[int(np.argmax(masses))].cost_spec.suction
                _set_planar_suction(world, dominant)
            current_cost = evaluate_current_cost(
                state.slots[0].cost_spec, world, world.layout.control_dim
            )
        else:
            command = np.zeros(world.layout.control_dim)
            diag = {"plans": [], "global": None}
            current_cost = 0.0
        world.step(command.reshape(1, -1), cfg.dt)

        record = {
            "tick": tick,
            "t": round(t, 9),
            "obs": obs,
            "plan_first_actions": plan_first,
            "plan_actions": plan_actions,
            "per_plan": diag["plans"],
            "global": diag["global"],
            "command": command.tolist(),
            "cost": current_cost,
            "world": world.summary(),
            "hold": hold,
        }
        records.append(record)
        if trace_file is not None:
            trace_file.write(json.dumps(record, sort_keys=True) + "\n")

        if _success_now(scenario, world, _observe(scenario, world)):
            hold += 1
        else:
            hold = 0
        if hold >= scenario.hold_ticks:
            success_tick = tick + 1
            break

        if realtime:
            lag = (tick + 1) * cfg.dt - (time.monotonic() - wall_start)
            if lag > 0:
                time.sleep(lag)

    pos_error, ori_error = _errors(scenario, world)
    success = success_tick is not None
    summary = TrialSummary(
        success=success,
        pos_error=pos_error,
        ori_error=ori_error,
        completion_time=(success_tick * cfg.dt) if success else None,
        ticks=len(records),
        seed=seed,
    )
    return summary, records


def run_batch(scenario: ScenarioConfig, trials: int | None = None, mode: str = "multimodal"):
    """Run seeded trials (base_seed + index) and aggregate their summaries."""
    trials = trials or scenario.trial_count
    if trials < 1:
        raise ValueError("need at least one trial")
    summaries = []
    for i in range(trials):
        summary, _ = run_trial(scenario, seed=scenario.base_seed + i, mode=mode)
        summaries.append(summary)
    return aggregate(summaries), summaries


def aggregate(summaries: list[TrialSummary]) -> dict:
    pos = np.array([s.pos_error for s in summaries])
    ori = np.array([s.ori_error for s in summaries])
    times = np.array([s.completion_time for s in summaries if s.success], dtype=np.float64)
    n = len(summaries)
    return {
        "trials": n,
        "success_rate": sum(s.success for s in summaries) / n,
        "timeouts": sum(not s.success for s in summaries),
        "pos_error_mean": float(pos.mean()),
        "pos_error_std": float(pos.std()),
        "ori_error_mean": float(ori.mean()),
        "ori_error_std": float(ori.std()),
        "time_mean": float(times.mean()) if times.size else None,
        "time_std": float(times.std()) if times.size else None,
    }


def run_benchmark(scenario: ScenarioConfig, iterations: int = 100, seed: int | None = None):
    """Measure controller iterations per second of wall time on the live loop."""
    cfg = dataclasses.replace(
        scenario.controller, seed=scenario.base_seed if seed is None else seed
    )
    world = make_world(scenario)
    factors, templates = load_domain(scenario.domain_path)
    desired = resolve_desired(scenario.desired_raw, factors)
    obs = _observe(scenario, world)
    for name, value in obs.items():
        factors[name] = update_belief(factors[name], Observation(name, value), scenario.confidence)
    plan_list = parallel_act_sel(factors, desired, templates)
    specs = plan_interface(plan_list, build_cost_database(scenario), scenario.grasp_modes)
    state = ControllerState(cfg, world.layout.control_dim)

    # Warm up allocations outside the timed section.
    command, _ = m3p2i_iteration(state, world, specs, cfg)
    world.step(command.reshape(1, -1), cfg.dt)
    start = time.perf_counter()
    for _ in range(iterations):
        command, _ = m3p2i_iteration(state, world, specs, cfg)
        world.step(command.reshape(1, -1), cfg.dt)
    elapsed = time.perf_counter() - start
    return {
        "iterations": iterations,
        "seconds": elapsed,
        "iterations_per_second": iterations / elapsed,
        "num_plans": len(specs),
        "samples_per_plan": cfg.samples_per_plan,
        "horizon": cfg.horizon,
    }
