"""Planar push/pull world.

A disc robot interacts with a single rectangular object inside a walled arena.
Pushing is quasi-static: when the robot disc overlaps the object and moves into
it, the object translates along the contact normal and rotates in proportion to
the tangential offset of the contact point; whatever the object cannot absorb
(e.g. because a wall pins it) pushes the robot back out, so bodies never
tunnel through each other. Pulling is a kinematic suction tow: once attached,
the object follows the robot rigidly at the frozen offset and the robot's
effective speed is reduced by a tow factor.

All state arrays carry a leading batch dimension so rollouts step every sample
at once; a single-sample slice steps through the exact same arithmetic, which
keeps serial, threaded, and vectorized rollouts bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


@dataclass
class PlanarLayout:
    """Static scene description and physical parameters."""

    arena: tuple[float, float, float, float] = (-2.0, 2.0, -2.0, 2.0)
    robot_radius: float = 0.15
    robot_start: tuple[float, float] = (0.0, 0.0)
    object_half_extents: tuple[float, float] = (0.15, 0.15)
    object_start: tuple[float, float] = (1.0, 0.0)
    object_yaw: float = 0.0
    goal_pos: tuple[float, float] = (1.5, 1.5)
    goal_yaw: float = 0.0
    static_discs: list = field(default_factory=list)  # (x, y, radius)
    static_rects: list = field(default_factory=list)  # (x, y, hx, hy, yaw)
    dynamic_obstacles: list = field(default_factory=list)  # {pos, vel, radius}
    v_max: float = 1.0
    tow_speed_factor: float = 0.5
    suction_range: float = 0.15
    push_rotation_gain: float = 4.0

    @property
    def control_dim(self) -> int:
        return 2

    def clip_controls(self, controls: np.ndarray) -> np.ndarray:
        """Scale velocity commands down to the speed limit (norm bound)."""
        speed = np.sqrt(np.einsum("...d,...d->...", controls, controls))
        factor = np.where(speed > self.v_max, self.v_max / np.maximum(speed, _EPS), 1.0)
        return controls * factor[..., None]


def _rot2(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.cos(theta), np.sin(theta)


def _rotate(vec: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Rotate (..., 2) vectors by the given angle components."""
    x = cos * vec[..., 0] - sin * vec[..., 1]
    y = sin * vec[..., 0] + cos * vec[..., 1]
    return np.stack([x, y], axis=-1)


class PlanarBatch:
    """A batch of planar world states sharing one layout."""

    def __init__(self, layout: PlanarLayout, size: int = 1, suction_auto: bool = False):
        self.layout = layout
        self.suction_auto = suction_auto
        b = size
        self.robot_pos = np.tile(np.asarray(layout.robot_start, dtype=np.float64), (b, 1))
        self.robot_vel = np.zeros((b, 2))
        self.heading = np.tile(np.array([1.0, 0.0]), (b, 1))
        self.obj_pos = np.tile(np.asarray(layout.object_start, dtype=np.float64), (b, 1))
        self.obj_yaw = np.full(b, float(layout.object_yaw))
        self.obj_vel = np.zeros((b, 2))
        self.obj_yaw_rate = np.zeros(b)
        self.attached = np.zeros(b, dtype=bool)
        self.attach_offset = np.zeros((b, 2))
        self.goal_pos = np.asarray(layout.goal_pos, dtype=np.float64).copy()
        self.goal_yaw = float(layout.goal_yaw)
        dyn = layout.dynamic_obstacles
        self.dyn_pos = np.array([d["pos"] for d in dyn], dtype=np.float64).reshape(-1, 2)
        self.dyn_vel = np.array([d["vel"] for d in dyn], dtype=np.float64).reshape(-1, 2)
        self.dyn_radius = np.array([d.get("radius", 0.1) for d in dyn], dtype=np.float64)

    # -- view protocol used by cost terms -----------------------------------
    @property
    def size(self) -> int:
        return self.robot_pos.shape[0]

    @property
    def probe_pos(self) -> np.ndarray:
        """Representative position per sample, recorded in rollout trajectories."""
        return self.robot_pos

    def entity_pos(self, name: str) -> np.ndarray:
        if name == "robot":
            return self.robot_pos
        if name == "object":
            return self.obj_pos
        if name == "goal":
            return np.broadcast_to(self.goal_pos, self.robot_pos.shape)
        raise KeyError(f"unknown planar entity '{name}'")

    # -- stepping ------------------------------------------------------------
    def _arena_clamp_point(self, pos: np.ndarray, margin_x, margin_y) -> np.ndarray:
        xmin, xmax, ymin, ymax = self.layout.arena
        pos[..., 0] = np.clip(pos[..., 0], xmin + margin_x, xmax - margin_x)
        pos[..., 1] = np.clip(pos[..., 1], ymin + margin_y, ymax - margin_y)
        return pos

    def _object_margins(self, yaw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        hx, hy = self.layout.object_half_extents
        c, s = np.abs(np.cos(yaw)), np.abs(np.sin(yaw))
        return hx * c + hy * s, hx * s + hy * c

    def _object_surface_gap(self) -> np.ndarray:
        """Distance from the robot surface to the object rectangle (>= 0)."""
        c, s = _rot2(-self.obj_yaw)
        local = _rotate(self.robot_pos - self.obj_pos, c, s)
        h = np.asarray(self.layout.object_half_extents)
        delta = local - np.clip(local, -h, h)
        dist = np.sqrt(np.einsum("bd,bd->b", delta, delta))
        return np.maximum(dist - self.layout.robot_radius, 0.0)

    def step(self, controls: np.ndarray, dt: float) -> None:
        """Advance every sample by one step under its control (v_x, v_y)."""
        controls = np.asarray(controls, dtype=np.float64).reshape(self.size, 2)
        if not np.isfinite(controls).all():
            raise ValueError("non-finite control input")
        lay = self.layout

        tow = np.where(self.attached, lay.tow_speed_factor, 1.0)
        vel = controls * tow[:, None]
        self.robot_vel = vel
        self.robot_pos = self._arena_clamp_point(
            self.robot_pos + vel * dt, lay.robot_radius, lay.robot_radius
        )
        speed = np.sqrt(np.einsum("bd,bd->b", vel, vel))
        moving = speed > _EPS
        self.heading = np.where(
            moving[:, None], vel / np.maximum(speed, _EPS)[:, None], self.heading
        )

        if self.suction_auto:
            engage = (~self.attached) & (self._object_surface_gap() <= lay.suction_range)
            self.attach_offset = np.where(
                engage[:, None], self.obj_pos - self.robot_pos, self.attach_offset
            )
            self.attached = self.attached | engage

        prev_obj = self.obj_pos.copy()

        # Towed object follows rigidly; walls may compress the offset.
        towed = self.robot_pos + self.attach_offset
        mx, my = self._object_margins(self.obj_yaw)
        towed = self._arena_clamp_point(towed, mx, my)
        self.obj_pos = np.where(self.attached[:, None], towed, self.obj_pos)

        self._resolve_push(vel, dt)

        self.obj_vel = (self.obj_pos - prev_obj) / dt
        if self.dyn_pos.shape[0]:
            self.dyn_pos = self.dyn_pos + self.dyn_vel * dt
            xmin, xmax, ymin, ymax = lay.arena
            self.dyn_pos[:, 0] = np.clip(
                self.dyn_pos[:, 0], xmin + self.dyn_radius, xmax - self.dyn_radius
            )
            self.dyn_pos[:, 1] = np.clip(
                self.dyn_pos[:, 1], ymin + self.dyn_radius, ymax - self.dyn_radius
            )

    def _resolve_push(self, vel: np.ndarray, dt: float) -> None:
        """Disc-vs-rectangle contact: push the object, return the remainder to the robot."""
        lay = self.layout
        free = ~self.attached
        c, s = _rot2(-self.obj_yaw)
        local = _rotate(self.robot_pos - self.obj_pos, c, s)
        h = np.asarray(lay.object_half_extents)
        closest = np.clip(local, -h, h)
        delta = local - closest
        dist = np.sqrt(np.einsum("bd,bd->b", delta, delta))
        outside = dist > _EPS

        # Contact normal pointing from the robot into the object.
        n_local_out = np.where(
            outside[:, None], -delta / np.maximum(dist, _EPS)[:, None], np.zeros_like(delta)
        )
        inner_norm = np.sqrt(np.einsum("bd,bd->b", local, local))
        n_local_in = np.where(
            (inner_norm > _EPS)[:, None],
            -local / np.maximum(inner_norm, _EPS)[:, None],
            np.tile(np.array([1.0, 0.0]), (self.size, 1)),
        )
        n_local = np.where(outside[:, None], n_local_out, n_local_in)
        pen = np.where(outside, lay.robot_radius - dist, lay.robot_radius)
        overlap = free & (pen > _EPS)

        ci, si = _rot2(self.obj_yaw)
        n_world = _rotate(n_local, ci, si)
        v_local = _rotate(vel, c, s)
        pushing = overlap & (np.einsum("bd,bd->b", v_local, n_local) > 0.0)

        target = self.obj_pos + np.where(pushing[:, None], pen[:, None] * n_world, 0.0)
        mx, my = self._object_margins(self.obj_yaw)
        target = self._arena_clamp_point(target, mx, my)
        new_obj = np.where(pushing[:, None], target, self.obj_pos)
        moved = np.einsum("bd,bd->b", new_obj - self.obj_pos, n_world)

        # Torque from the tangential offset of the contact point, scaled by how
        # much of the push the object actually absorbed.
        lever = _rotate(closest, ci, si)
        torque = lever[:, 0] * n_world[:, 1] - lever[:, 1] * n_world[:, 0]
        dyaw = np.where(pushing, lay.push_rotation_gain * torque * moved, 0.0)
        self.obj_yaw = self.obj_yaw + dyaw
        self.obj_yaw_rate = dyaw / dt

        # Penetration the object could not absorb is resolved on the robot, so
        # a wall-pinned object blocks the robot instead of being tunnelled.
        residual = np.where(pushing, np.maximum(pen - moved, 0.0), 0.0)
        residual = np.where(overlap & ~pushing, pen, residual)
        self.obj_pos = new_obj
        self.robot_pos = self._arena_clamp_point(
            self.robot_pos - residual[:, None] * n_world,
            lay.robot_radius,
            lay.robot_radius,
        )

    # -- suction --------------------------------------------------------------
    def set_suction(self, engaged: bool, sample: int = 0) -> bool:
        """Engage/release the suction tow on one sample. Returns success."""
        if not engaged:
            self.attached[sample] = False
            return True
        if self._object_surface_gap()[sample] > self.layout.suction_range:
            return False
        self.attached[sample] = True
        self.attach_offset[sample] = self.obj_pos[sample] - self.robot_pos[sample]
        return True

    # -- snapshots -------------------------------------------------------------
    _ARRAYS = (
        "robot_pos", "robot_vel", "heading", "obj_pos", "obj_yaw", "obj_vel",
        "obj_yaw_rate", "attached", "attach_offset", "goal_pos", "dyn_pos",
        "dyn_vel", "dyn_radius",
    )

    def snapshot(self) -> "PlanarSnapshot":
        data = {name: getattr(self, name).copy() for name in self._ARRAYS}
        return PlanarSnapshot(layout=self.layout, goal_yaw=self.goal_yaw, data=data)

    def extract(self, k: int) -> "PlanarBatch":
        """Copy sample k into a fresh single-sample batch."""
        out = PlanarBatch(self.layout, size=1, suction_auto=self.suction_auto)
        for name in self._ARRAYS:
            arr = getattr(self, name)
            if arr.ndim and arr.shape[0] == self.size and name not in (
                "goal_pos", "dyn_pos", "dyn_vel", "dyn_radius",
            ):
                setattr(out, name, arr[k : k + 1].copy())
            else:
                setattr(out, name, arr.copy())
        out.goal_yaw = self.goal_yaw
        return out

    def state_equal(self, other: "PlanarBatch") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in self._ARRAYS
        )

    def summary(self, sample: int = 0) -> dict:
        """Compact per-tick record of one sample, for traces."""
        return {
            "robot": self.robot_pos[sample].tolist(),
            "object": self.obj_pos[sample].tolist(),
            "object_yaw": float(self.obj_yaw[sample]),
            "goal": self.goal_pos.tolist(),
            "attached": bool(self.attached[sample]),
            "dyn_obstacles": self.dyn_pos.tolist(),
        }


@dataclass
class PlanarSnapshot:
    """Immutable copy of a batch state; restores to any batch size."""

    layout: PlanarLayout
    goal_yaw: float
    data: dict

    @property
    def probe_dim(self) -> int:
        return 2

    def restore(self, size: int | None = None, suction_auto: bool = False) -> PlanarBatch:
        src = self.data["robot_pos"].shape[0]
        if size is None:
            size = src
        if src not in (1, size):
            raise ValueError("snapshot can only be tiled from a single-sample batch")
        for name in PlanarBatch._ARRAYS:
            if name not in self.data:
                raise ValueError(f"corrupt snapshot: missing '{name}'")
        batch = PlanarBatch(self.layout, size=size, suction_auto=suction_auto)
        reps = size // src if src != size else 1
        for name in PlanarBatch._ARRAYS:
            arr = self.data[name]
            if name in ("goal_pos", "dyn_pos", "dyn_vel", "dyn_radius"):
                setattr(batch, name, arr.copy())
            elif src != size:
                setattr(batch, name, np.repeat(arr, reps, axis=0))
            else:
                setattr(batch, name, arr.copy())
        batch.goal_yaw = self.goal_yaw
        return batch


def apply_planar_disturbance(batch: PlanarBatch, event: dict) -> None:
    """Mutate the world per a scripted disturbance event."""
    kind = event["kind"]
    if kind == "teleport_object":
        batch.obj_pos[:] = np.asarray(event["pos"], dtype=np.float64)
        if "yaw" in event:
            batch.obj_yaw[:] = float(event["yaw"])
        batch.obj_vel[:] = 0.0
        batch.obj_yaw_rate[:] = 0.0
        batch.attached[:] = False
    elif kind == "move_goal":
        batch.goal_pos = np.asarray(event["pos"], dtype=np.float64)
        if "yaw" in event:
            batch.goal_yaw = float(event["yaw"])
    elif kind == "retarget_obstacle":
        idx = int(event["index"])
        if idx >= batch.dyn_pos.shape[0]:
            raise KeyError(f"no dynamic obstacle with index {idx}")
        batch.dyn_vel[idx] = np.asarray(event["vel"], dtype=np.float64)
        if "pos" in event:
            batch.dyn_pos[idx] = np.asarray(event["pos"], dtype=np.float64)
    elif kind == "spawn_obstacle":
        batch.dyn_pos = np.vstack([batch.dyn_pos, np.asarray(event["pos"], dtype=np.float64)])
        batch.dyn_vel = np.vstack([batch.dyn_vel, np.asarray(event["vel"], dtype=np.float64)])
        batch.dyn_radius = np.append(batch.dyn_radius, float(event.get("radius", 0.1)))
    else:
        raise KeyError(f"unknown planar disturbance '{kind}'")
