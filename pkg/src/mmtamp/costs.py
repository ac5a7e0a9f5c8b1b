"""Cost terms for the push/pull and pick/place skills, plus the symmetric-object
orientation metric.

Scalar functions implement the individual cost formulas; the *Term classes wrap
them for batched evaluation against a rollout world. A CostSpec bundles the
terms of one skill together with the suction policy its rollouts should use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


# ---------------------------------------------------------------------------
# Orientation metric for fully symmetric objects
# ---------------------------------------------------------------------------

def ori_metric_batch(basis_u: np.ndarray, basis_v: np.ndarray) -> np.ndarray:
    """Orientation distance between batches of orthonormal bases.

    basis arrays have shape (..., 3, 3) with basis vectors in columns. Returns
    min over axis pairs (i, j) of 2 - |u1.vi| - |u2.vj|, which decouples into
    2 - max_i |u1.vi| - max_j |u2.vj|. Zero exactly when two axes of one basis
    are collinear with two axes of the other (cube-symmetry equivalence).
    """
    dots = np.abs(np.einsum("...ki,...kj->...ij", basis_u, basis_v))
    return 2.0 - dots[..., 0, :].max(axis=-1) - dots[..., 1, :].max(axis=-1)


def _check_orthonormal(basis: np.ndarray, tol: float = 1e-9) -> None:
    gram = basis.T @ basis
    if not np.allclose(gram, np.eye(3), atol=tol):
        raise ValueError("basis is not orthonormal within 1e-9")


def ori_metric(basis_u: np.ndarray, basis_v: np.ndarray) -> float:
    """Validated scalar orientation metric in [0, 2] between two orthonormal bases."""
    u = np.asarray(basis_u, dtype=np.float64)
    v = np.asarray(basis_v, dtype=np.float64)
    _check_orthonormal(u)
    _check_orthonormal(v)
    return float(ori_metric_batch(u, v))


def yaw_basis(yaw: np.ndarray | float) -> np.ndarray:
    """Embed planar yaw angles as z-rotation bases, shape (..., 3, 3)."""
    yaw = np.asarray(yaw, dtype=np.float64)
    c, s = np.cos(yaw), np.sin(yaw)
    zero = np.zeros_like(yaw)
    one = np.ones_like(yaw)
    rows = np.stack(
        [
            np.stack([c, -s, zero], axis=-1),
            np.stack([s, c, zero], axis=-1),
            np.stack([zero, zero, one], axis=-1),
        ],
        axis=-2,
    )
    return rows


def planar_ori_metric(yaw_a: np.ndarray | float, yaw_b: np.ndarray | float) -> np.ndarray:
    """ori_metric specialized to z-rotations: 2 - 2 * max(|cos d|, |sin d|)."""
    d = np.asarray(yaw_a, dtype=np.float64) - np.asarray(yaw_b, dtype=np.float64)
    return 2.0 - 2.0 * np.maximum(np.abs(np.cos(d)), np.abs(np.sin(d)))


# ---------------------------------------------------------------------------
# Scalar cost formulas
# ---------------------------------------------------------------------------

def dist_cost(p_a: np.ndarray, p_b: np.ndarray, weight: float) -> float:
    p_a = np.asarray(p_a, dtype=np.float64)
    p_b = np.asarray(p_b, dtype=np.float64)
    if not (np.isfinite(p_a).all() and np.isfinite(p_b).all()):
        raise ValueError("positions must be finite")
    return float(weight * np.linalg.norm(p_b - p_a))


def _clamped_cosine(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """h(cos) = max(cos, 0), with degenerate (zero-length) pairs scored 0."""
    safe = den > _EPS
    cos = np.where(safe, num / np.where(safe, den, 1.0), 0.0)
    return np.maximum(cos, 0.0)


def align_push_cost(p_r, p_o, p_g, weight: float) -> float:
    """Penalty for the robot sitting between object and goal (bad for pushing).

    Zero when the robot is opposite the goal across the object; degenerate
    (coincident) geometry scores 0.
    """
    a = np.asarray(p_r, dtype=np.float64) - np.asarray(p_o, dtype=np.float64)
    b = np.asarray(p_g, dtype=np.float64) - np.asarray(p_o, dtype=np.float64)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(weight * _clamped_cosine(np.dot(a, b), np.asarray(den)))


def align_pull_cost(p_r, p_o, p_g, weight: float) -> float:
    """Mirror of align_push: zero when the robot lies between object and goal."""
    a = np.asarray(p_r, dtype=np.float64) - np.asarray(p_o, dtype=np.float64)
    b = np.asarray(p_g, dtype=np.float64) - np.asarray(p_o, dtype=np.float64)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(weight * _clamped_cosine(-np.dot(a, b), np.asarray(den)))


def act_pull_cost(p_r, p_o, u_vec, weight: float) -> float:
    """Penalty for candidate motion toward the object (towing requires moving away)."""
    d = np.asarray(p_o, dtype=np.float64) - np.asarray(p_r, dtype=np.float64)
    u = np.asarray(u_vec, dtype=np.float64)
    den = np.linalg.norm(d) * np.linalg.norm(u)
    return float(weight * _clamped_cosine(np.dot(d, u), np.asarray(den)))


def dyn_obs_cost(p_r, obs_pos, obs_vel, steps_ahead: int, dt: float, weight: float) -> float:
    """Proximity penalty against the constant-velocity prediction of an obstacle."""
    pred = np.asarray(obs_pos, dtype=np.float64) + np.asarray(obs_vel, dtype=np.float64) * (
        steps_ahead * dt
    )
    return float(weight * np.exp(-np.linalg.norm(np.asarray(p_r, dtype=np.float64) - pred)))


def reach_cost(p_ee, z_ee, p_o, z_o, psi: float, w_reach: float, w_tilt: float) -> float:
    """Distance-to-object plus grasp tilt residual.

    psi = 1 asks for the approach axis parallel to the object axis (top grasp),
    psi = 0 for perpendicular (side grasp). The tilt residual is taken in
    absolute value so the cost stays bounded below.
    """
    p_ee = np.asarray(p_ee, dtype=np.float64)
    p_o = np.asarray(p_o, dtype=np.float64)
    z_ee = np.asarray(z_ee, dtype=np.float64)
    z_o = np.asarray(z_o, dtype=np.float64)
    cos = np.abs(np.dot(z_ee, z_o)) / (np.linalg.norm(z_ee) * np.linalg.norm(z_o))
    return float(w_reach * np.linalg.norm(p_ee - p_o) + w_tilt * abs(cos - psi))


def pick_cost(l_gripper: float, weight: float) -> float:
    """Drives the fingers closed (l is the normalized separation, 0 = closed)."""
    return float(weight * min(max(l_gripper, 0.0), 1.0))


def place_cost(l_gripper: float, weight: float) -> float:
    """Drives the fingers open."""
    return float(weight * (1.0 - min(max(l_gripper, 0.0), 1.0)))


def preplace_cost(pos_o, basis_o, pos_p, basis_p, w_dist: float, w_ori: float) -> float:
    """Distance plus orientation residual between object pose and a staging pose."""
    return dist_cost(pos_o, pos_p, w_dist) + float(
        w_ori * ori_metric_batch(np.asarray(basis_o, dtype=np.float64),
                                 np.asarray(basis_p, dtype=np.float64))
    )


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass
class CostWeights:
    """Per-term weights; overridable from the scenario file."""

    dist: float = 1.0
    ori: float = 0.5
    align_push: float = 0.6
    align_pull: float = 0.6
    act_pull: float = 0.6
    dyn_obs: float = 2.0
    reach: float = 1.0
    tilt: float = 0.5
    gripper: float = 1.0

    @classmethod
    def from_dict(cls, overrides: dict | None) -> "CostWeights":
        w = cls()
        for key, value in (overrides or {}).items():
            if not hasattr(w, key):
                raise KeyError(f"unknown cost weight '{key}'")
            setattr(w, key, float(value))
        return w


# ---------------------------------------------------------------------------
# Batched terms
# ---------------------------------------------------------------------------

def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...d,...d->...", v, v))


class PlanarDistTerm:
    def __init__(self, a: str, b: str, weight: float):
        self.name = f"dist({a},{b})"
        self.a, self.b, self.weight = a, b, weight

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        return self.weight * _norm(view.entity_pos(self.b) - view.entity_pos(self.a))


class PlanarOriTerm:
    name = "ori(object,goal)"

    def __init__(self, weight: float):
        self.weight = weight

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        return self.weight * planar_ori_metric(view.obj_yaw, view.goal_yaw)


class PlanarAlignTerm:
    """align_push (sign=+1) or align_pull (sign=-1)."""

    def __init__(self, weight: float, sign: float):
        self.name = "align_push" if sign > 0 else "align_pull"
        self.weight, self.sign = weight, sign

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        a = view.robot_pos - view.obj_pos
        b = view.goal_pos[None, :] - view.obj_pos
        num = self.sign * np.einsum("bd,bd->b", a, b)
        return self.weight * _clamped_cosine(num, _norm(a) * _norm(b))


class PlanarActPullTerm:
    """Active only while the suction is attached: penalizes motion toward the object."""

    name = "act_pull"

    def __init__(self, weight: float):
        self.weight = weight

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        d = view.obj_pos - view.robot_pos
        u = control[:, :2]
        num = np.einsum("bd,bd->b", d, u)
        cost = self.weight * _clamped_cosine(num, _norm(d) * _norm(u))
        return np.where(view.attached, cost, 0.0)


class PlanarDynObsTerm:
    """Proximity penalty against every dynamic obstacle at its rolled-out position."""

    name = "dyn_obs"

    def __init__(self, weight: float):
        self.weight = weight

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        if view.dyn_pos.shape[0] == 0:
            return np.zeros(view.size)
        d = view.robot_pos[:, None, :] - view.dyn_pos[None, :, :]
        return self.weight * np.exp(-_norm(d)).sum(axis=1)


class GripperReachTerm:
    def __init__(self, psi: float, w_reach: float, w_tilt: float, cube: int):
        self.name = f"reach(psi={psi:g})"
        self.psi, self.w_reach, self.w_tilt, self.cube = psi, w_reach, w_tilt, cube

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        p = view.cube_pos[:, self.cube]
        z_ee = view.ee_rot[:, :, 2]
        z_o = view.cube_rot[:, self.cube, :, 2]
        cos = np.abs(np.einsum("bd,bd->b", z_ee, z_o))
        return self.w_reach * _norm(view.ee_pos - p) + self.w_tilt * np.abs(cos - self.psi)


class GripperFingerTerm:
    """pick closes the fingers (cost = w*l), place opens them (cost = w*(1-l))."""

    def __init__(self, mode: str, weight: float):
        if mode not in ("pick", "place"):
            raise ValueError(mode)
        self.name = mode
        self.mode, self.weight = mode, weight

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        l = np.clip(view.fingers / view.finger_max, 0.0, 1.0)
        return self.weight * (l if self.mode == "pick" else 1.0 - l)


class GripperPoseTerm:
    """Distance + orientation of the held cube against a staging or place pose."""

    def __init__(self, stage: str, w_dist: float, w_ori: float, cube: int):
        self.name = stage
        self.stage, self.w_dist, self.w_ori, self.cube = stage, w_dist, w_ori, cube

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        target_pos, target_rot = view.stage_pose(self.stage)
        d = _norm(view.cube_pos[:, self.cube] - target_pos)
        phi = ori_metric_batch(view.cube_rot[:, self.cube], target_rot)
        return self.w_dist * d + self.w_ori * phi


class GripperDynObsTerm:
    name = "dyn_obs"

    def __init__(self, weight: float):
        self.weight = weight

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        if view.dyn_pos.shape[0] == 0:
            return np.zeros(view.size)
        d = view.ee_pos[:, None, :] - view.dyn_pos[None, :, :]
        return self.weight * np.exp(-_norm(d)).sum(axis=1)


# ---------------------------------------------------------------------------
# Cost specs
# ---------------------------------------------------------------------------

@dataclass
class CostSpec:
    """One skill's cost: an identity key, a suction policy for rollouts, and terms.

    suction policy: "auto" engages within range (pull rollouts), "detach"
    releases at rollout start (push rollouts), "inherit" leaves the world alone.
    """

    key: str
    terms: list = field(default_factory=list)
    suction: str = "inherit"

    def evaluate(self, view, control: np.ndarray) -> np.ndarray:
        total = np.zeros(view.size)
        for term in self.terms:
            total += term.evaluate(view, control)
        return total

    def breakdown(self, view, control: np.ndarray) -> dict[str, np.ndarray]:
        return {term.name: term.evaluate(view, control) for term in self.terms}


def compose_push(weights: CostWeights, num_dynamic_obstacles: int = 0) -> CostSpec:
    """Push skill: approach + transport + orientation + push-side alignment."""
    terms = [
        PlanarDistTerm("robot", "object", weights.dist),
        PlanarDistTerm("object", "goal", weights.dist),
        PlanarOriTerm(weights.ori),
        PlanarAlignTerm(weights.align_push, +1.0),
    ]
    if num_dynamic_obstacles:
        terms.append(PlanarDynObsTerm(weights.dyn_obs))
    return CostSpec(key="push", terms=terms, suction="detach")


def compose_pull(weights: CostWeights, num_dynamic_obstacles: int = 0) -> CostSpec:
    """Pull skill: as push but aligned for towing, plus the away-motion constraint."""
    terms = [
        PlanarDistTerm("robot", "object", weights.dist),
        PlanarDistTerm("object", "goal", weights.dist),
        PlanarOriTerm(weights.ori),
        PlanarAlignTerm(weights.align_pull, -1.0),
        PlanarActPullTerm(weights.act_pull),
    ]
    if num_dynamic_obstacles:
        terms.append(PlanarDynObsTerm(weights.dyn_obs))
    return CostSpec(key="pull", terms=terms, suction="auto")
