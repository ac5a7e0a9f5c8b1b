"""Scenario configuration: a declarative YAML schema covering the world layout,
domain file, controller parameters, observer thresholds, disturbance schedule,
and termination rules.

The schema is strict: unknown keys are rejected so typos fail fast in
`mmtamp validate` instead of silently changing behavior.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from mmtamp.controller import ControllerConfig
from mmtamp.costs import CostWeights
from mmtamp.worlds.gripper import GripperLayout
from mmtamp.worlds.planar import PlanarLayout

FORMAT_VERSION = 1


class ConfigError(Exception):
    pass


@dataclass
class ScenarioConfig:
    name: str
    world: str  # "planar" | "gripper"
    layout: PlanarLayout | GripperLayout
    domain_path: Path
    desired_raw: dict[str, str]
    controller: ControllerConfig
    weights: CostWeights
    thresholds: dict[str, float] = field(default_factory=dict)
    ticks_per_plan: int = 25
    confidence: float = 1.0
    grasp_modes: list[float] | None = None
    disturbances: list[dict] = field(default_factory=list)
    timeout: float = 40.0
    hold_ticks: int = 10
    trial_count: int = 20
    base_seed: int = 1000

    def validate(self) -> None:
        if self.world not in ("planar", "gripper"):
            raise ConfigError(f"unknown world '{self.world}'")
        if self.timeout <= 0:
            raise ConfigError("termination.timeout must be positive")
        if self.hold_ticks < 1:
            raise ConfigError("termination.hold_ticks must be >= 1")
        if self.ticks_per_plan < 1:
            raise ConfigError("planner.ticks_per_plan must be >= 1")
        if not 0.5 < self.confidence <= 1.0:
            raise ConfigError("planner.confidence must lie in (0.5, 1]")
        if not self.domain_path.exists():
            raise ConfigError(f"domain file not found: {self.domain_path}")
        times = [float(d.get("time", -1.0)) for d in self.disturbances]
        if any(t < 0 for t in times) or times != sorted(times):
            raise ConfigError("disturbance times must be nonnegative and nondecreasing")
        self.controller.validate()


def _build_dataclass(cls, raw: dict, what: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {what}: {err}") from err


_TOP_KEYS = {
    "format_version", "name", "world", "layout", "domain", "desired_state",
    "controller", "weights", "observer_thresholds", "planner", "disturbances",
    "termination", "trials",
}


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle)
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read scenario {path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"scenario {path} is not a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    for key in ("world", "domain", "desired_state"):
        if key not in raw:
            raise ConfigError(f"scenario is missing required key '{key}'")

    world = raw["world"]
    layout_raw = dict(raw.get("layout", {}))
    if world == "planar":
        layout = _build_dataclass(PlanarLayout, layout_raw, "planar layout")
    elif world == "gripper":
        layout = _build_dataclass(GripperLayout, layout_raw, "gripper layout")
    else:
        raise ConfigError(f"unknown world '{world}'")

    try:
        controller = _build_dataclass(
            ControllerConfig, dict(raw.get("controller", {})), "controller config"
        )
    except ConfigError:
        raise
    try:
        weights = CostWeights.from_dict(raw.get("weights"))
    except KeyError as err:
        raise ConfigError(str(err)) from err

    planner_raw = dict(raw.get("planner", {}))
    unknown = set(planner_raw) - {"ticks_per_plan", "confidence", "grasp_modes"}
    if unknown:
        raise ConfigError(f"unknown planner keys: {sorted(unknown)}")
    termination = dict(raw.get("termination", {}))
    unknown = set(termination) - {"timeout", "hold_ticks"}
    if unknown:
        raise ConfigError(f"unknown termination keys: {sorted(unknown)}")
    trials = dict(raw.get("trials", {}))
    unknown = set(trials) - {"count", "base_seed"}
    if unknown:
        raise ConfigError(f"unknown trials keys: {sorted(unknown)}")

    domain_path = Path(raw["domain"])
    if not domain_path.is_absolute():
        domain_path = path.parent / domain_path

    scenario = ScenarioConfig(
        name=str(raw.get("name", path.stem)),
        world=world,
        layout=layout,
        domain_path=domain_path,
        desired_raw=dict(raw["desired_state"]),
        controller=controller,
        weights=weights,
        thresholds={k: float(v) for k, v in dict(raw.get("observer_thresholds", {})).items()},
        ticks_per_plan=int(planner_raw.get("ticks_per_plan", 25)),
        confidence=float(planner_raw.get("confidence", 1.0)),
        grasp_modes=planner_raw.get("grasp_modes"),
        disturbances=list(raw.get("disturbances", [])),
        timeout=float(termination.get("timeout", 40.0)),
        hold_ticks=int(termination.get("hold_ticks", 10)),
        trial_count=int(trials.get("count", 20)),
        base_seed=int(trials.get("base_seed", 1000)),
    )
    scenario.validate()
    return scenario
