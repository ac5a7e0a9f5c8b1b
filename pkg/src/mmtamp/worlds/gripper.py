"""Kinematic free-flying gripper world for pick/place.

The end effector is a point tool with an orientation frame whose z column is
the approach axis, plus a scalar finger separation. Grasping is kinematic: a
cube between the fingers holds them apart at its width, and the cube attaches
when the separation sits in the hold band while the cube center is within the
capture radius and the approach direction is not blocked by an obstacle box
(e.g. a shelf above the cube). Released cubes drop straight down onto the
highest support below them. No gravity or arm model beyond that.

State arrays carry a leading batch dimension; see the planar world for the
batching rationale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


@dataclass
class GripperLayout:
    """Static scene description and limits."""

    workspace: tuple = (-0.7, 0.7, -0.7, 0.7, 0.0, 0.9)
    ee_start: tuple[float, float, float] = (0.0, 0.3, 0.3)
    ee_start_rot: np.ndarray | None = None  # default: approach axis pointing down
    ee_radius: float = 0.02
    finger_max: float = 0.08
    finger_start: float = 0.08
    cube_size: float = 0.06
    cubes: list = field(default_factory=list)  # {name, pos, yaw}
    target_cube: int = 0
    place_cube: int = 1
    boxes: list = field(default_factory=list)  # (xmin,xmax,ymin,ymax,zmin,zmax)
    dynamic_obstacles: list = field(default_factory=list)  # {pos, vel, radius}
    v_max: float = 0.6
    w_max: float = 2.0
    finger_rate_max: float = 0.25
    capture_radius: float = 0.02
    hold_tol: float = 0.005
    clearance_dist: float = 0.12
    preplace_offset: float = 0.05
    # The hand body trails the grip point along the approach axis; it is what
    # makes a top grasp physically impossible under a shelf.
    wrist_offset: float = 0.10
    wrist_radius: float = 0.025

    def __post_init__(self) -> None:
        if self.ee_start_rot is None:
            # 180 deg about x: z column points down.
            self.ee_start_rot = np.array(
                [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]
            )
        else:
            self.ee_start_rot = np.asarray(self.ee_start_rot, dtype=np.float64)
        if not self.cubes:
            self.cubes = [
                {"name": "red", "pos": (0.0, 0.0, self.cube_size / 2), "yaw": 0.0},
                {"name": "green", "pos": (0.3, 0.3, self.cube_size / 2), "yaw": 0.0},
            ]

    @property
    def control_dim(self) -> int:
        return 7

    @property
    def table_box(self) -> tuple:
        xmin, xmax, ymin, ymax, _, _ = self.workspace
        return (xmin, xmax, ymin, ymax, -0.05, 0.0)

    def clip_controls(self, controls: np.ndarray) -> np.ndarray:
        lo = np.array([-self.v_max] * 3 + [-self.w_max] * 3 + [-self.finger_rate_max])
        return np.clip(controls, lo, -lo)


def _yaw_rot(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rodrigues(rotvec: np.ndarray) -> np.ndarray:
    """Batched rotation matrices from rotation vectors, shape (B, 3, 3)."""
    theta = np.sqrt(np.einsum("bd,bd->b", rotvec, rotvec))
    safe = np.maximum(theta, _EPS)
    axis = rotvec / safe[:, None]
    x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
    zero = np.zeros_like(x)
    k = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    kk = np.einsum("bij,bjk->bik", k, k)
    eye = np.broadcast_to(np.eye(3), k.shape)
    r = eye + np.sin(theta)[:, None, None] * k + (1.0 - np.cos(theta))[:, None, None] * kk
    return np.where((theta > _EPS)[:, None, None], r, eye)


def _ray_hits_box(origin: np.ndarray, direction: np.ndarray, box, max_dist: float) -> np.ndarray:
    """Slab test: does the ray o + t*d, t in (0, max_dist], enter the AABB?"""
    lo = np.array(box[0::2], dtype=np.float64)
    hi = np.array(box[1::2], dtype=np.float64)
    tmin = np.full(origin.shape[0], -np.inf)
    tmax = np.full(origin.shape[0], np.inf)
    for axis in range(3):
        d = direction[:, axis]
        o = origin[:, axis]
        parallel = np.abs(d) < _EPS
        inside = (o >= lo[axis]) & (o <= hi[axis])
        t1 = (lo[axis] - o) / np.where(parallel, 1.0, d)
        t2 = (hi[axis] - o) / np.where(parallel, 1.0, d)
        t_lo, t_hi = np.minimum(t1, t2), np.maximum(t1, t2)
        t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), t_lo)
        t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), t_hi)
        tmin = np.maximum(tmin, t_lo)
        tmax = np.minimum(tmax, t_hi)
    return (tmax >= np.maximum(tmin, 0.0)) & (np.maximum(tmin, 0.0) <= max_dist)


class GripperBatch:
    """A batch of gripper world states sharing one layout."""

    def __init__(self, layout: GripperLayout, size: int = 1):
        self.layout = layout
        b = size
        c = len(layout.cubes)
        self.ee_pos = np.tile(np.asarray(layout.ee_start, dtype=np.float64), (b, 1))
        self.ee_rot = np.tile(layout.ee_start_rot, (b, 1, 1))
        self.fingers = np.full(b, float(layout.finger_start))
        self.cube_pos = np.tile(
            np.array([cb["pos"] for cb in layout.cubes], dtype=np.float64), (b, 1, 1)
        )
        self.cube_rot = np.tile(
            np.stack([_yaw_rot(float(cb.get("yaw", 0.0))) for cb in layout.cubes]),
            (b, 1, 1, 1),
        )
        self.attached = np.full(b, -1, dtype=np.int64)
        self.grasp_pos = np.zeros((b, 3))
        self.grasp_rot = np.tile(np.eye(3), (b, 1, 1))
        dyn = layout.dynamic_obstacles
        self.dyn_pos = np.array([d["pos"] for d in dyn], dtype=np.float64).reshape(-1, 3)
        self.dyn_vel = np.array([d["vel"] for d in dyn], dtype=np.float64).reshape(-1, 3)
        self.dyn_radius = np.array([d.get("radius", 0.03) for d in dyn], dtype=np.float64)
        self._boxes = [layout.table_box] + [tuple(bx) for bx in layout.boxes]

    # -- view protocol --------------------------------------------------------
    @property
    def size(self) -> int:
        return self.ee_pos.shape[0]

    @property
    def probe_pos(self) -> np.ndarray:
        """Representative position per sample, recorded in rollout trajectories."""
        return self.ee_pos

    @property
    def finger_max(self) -> float:
        return self.layout.finger_max

    def stage_pose(self, stage: str) -> tuple[np.ndarray, np.ndarray]:
        """Target pose (pos (B,3), basis (B,3,3)) for 'preplace' or 'place'."""
        base = self.cube_pos[:, self.layout.place_cube]
        rot = self.cube_rot[:, self.layout.place_cube]
        lift = self.layout.cube_size
        if stage == "preplace":
            lift += self.layout.preplace_offset
        elif stage != "place":
            raise KeyError(f"unknown stage '{stage}'")
        pos = base + np.array([0.0, 0.0, lift])
        return pos, rot

    # -- stepping ---------------------------------------------------------------
    def step(self, controls: np.ndarray, dt: float) -> None:
        """Advance under (v_xyz, w_xyz, finger_rate) controls."""
        controls = np.asarray(controls, dtype=np.float64).reshape(self.size, 7)
        if not np.isfinite(controls).all():
            raise ValueError("non-finite control input")
        lay = self.layout
        xmin, xmax, ymin, ymax, zmin, zmax = lay.workspace

        self.ee_pos = self.ee_pos + controls[:, :3] * dt
        self.ee_pos[:, 0] = np.clip(self.ee_pos[:, 0], xmin, xmax)
        self.ee_pos[:, 1] = np.clip(self.ee_pos[:, 1], ymin, ymax)
        self.ee_pos[:, 2] = np.clip(self.ee_pos[:, 2], max(zmin, lay.ee_radius), zmax)
        self.ee_rot = np.einsum("bij,bjk->bik", _rodrigues(controls[:, 3:6] * dt), self.ee_rot)
        self._resolve_ee_boxes()

        self.fingers = np.clip(self.fingers + controls[:, 6] * dt, 0.0, lay.finger_max)

        self._update_attachment()
        self._settle_cubes()

        if self.dyn_pos.shape[0]:
            self.dyn_pos = self.dyn_pos + self.dyn_vel * dt
            lo = np.array([xmin, ymin, zmin]) + self.dyn_radius[:, None]
            hi = np.array([xmax, ymax, zmax]) - self.dyn_radius[:, None]
            self.dyn_pos = np.clip(self.dyn_pos, lo, hi)

    def _wrist_pos(self) -> np.ndarray:
        return self.ee_pos - self.layout.wrist_offset * self.ee_rot[:, :, 2]

    @staticmethod
    def _sphere_box_pushout(center: np.ndarray, radius: float, box) -> np.ndarray:
        """Displacement that moves a sphere out of an AABB (zero where clear)."""
        lo = np.array(box[0::2], dtype=np.float64)
        hi = np.array(box[1::2], dtype=np.float64)
        closest = np.clip(center, lo, hi)
        delta = center - closest
        dist = np.sqrt(np.einsum("bd,bd->b", delta, delta))
        outside = dist > _EPS
        pen_out = radius - dist
        # Center inside the box: exit along the cheapest face.
        gap_lo = center - lo[None, :]
        gap_hi = hi[None, :] - center
        gaps = np.concatenate([gap_lo, gap_hi], axis=1)
        face = np.argmin(gaps, axis=1)
        face_dir = np.concatenate([-np.eye(3), np.eye(3)], axis=0)[face]
        pen_in = np.take_along_axis(gaps, face[:, None], axis=1)[:, 0] + radius
        normal = np.where(outside[:, None], delta / np.maximum(dist, _EPS)[:, None], face_dir)
        pen = np.where(outside, pen_out, pen_in)
        return np.where((pen > 0.0)[:, None], pen[:, None] * normal, 0.0)

    def _resolve_ee_boxes(self) -> None:
        """Push the tool out of obstacle boxes.

        Both the grip-point sphere and the trailing wrist sphere collide; the
        whole tool displaces rigidly by whatever either sphere needs.
        """
        lay = self.layout
        for box in lay.boxes:
            self.ee_pos = self.ee_pos + self._sphere_box_pushout(self.ee_pos, lay.ee_radius, box)
            self.ee_pos = self.ee_pos + self._sphere_box_pushout(
                self._wrist_pos(), lay.wrist_radius, box
            )
        # Wrist cannot sink below the table.
        wrist_z = self._wrist_pos()[:, 2]
        lift = np.maximum(lay.wrist_radius - wrist_z, 0.0)
        self.ee_pos[:, 2] = self.ee_pos[:, 2] + lift

    def _update_attachment(self) -> None:
        lay = self.layout
        size_band_lo = lay.cube_size - lay.hold_tol
        size_band_hi = lay.cube_size + lay.hold_tol

        # Release: fingers opened beyond the cube width band.
        held = self.attached >= 0
        release = held & (self.fingers >= size_band_hi)
        self.attached = np.where(release, -1, self.attached)
        held = self.attached >= 0

        # Cubes can't be squeezed below their width.
        self.fingers = np.where(held, np.maximum(self.fingers, lay.cube_size), self.fingers)

        # Held cubes follow the tool frame.
        if held.any():
            idx = np.maximum(self.attached, 0)
            rows = np.arange(self.size)
            new_pos = self.ee_pos + np.einsum("bij,bj->bi", self.ee_rot, self.grasp_pos)
            new_rot = np.einsum("bij,bjk->bik", self.ee_rot, self.grasp_rot)
            cur_pos = self.cube_pos[rows, idx]
            cur_rot = self.cube_rot[rows, idx]
            self.cube_pos[rows, idx] = np.where(held[:, None], new_pos, cur_pos)
            self.cube_rot[rows, idx] = np.where(held[:, None, None], new_rot, cur_rot)

        # Capture: nearest cube within reach of the grip point.
        d = self.ee_pos[:, None, :] - self.cube_pos
        dist = np.sqrt(np.einsum("bcd,bcd->bc", d, d))
        nearest = np.argmin(dist, axis=1)
        rows = np.arange(self.size)
        near_dist = dist[rows, nearest]
        captured = (~held) & (near_dist <= lay.capture_radius)

        # A cube between the fingers wedges them apart at its width.
        self.fingers = np.where(
            captured & (self.fingers < lay.cube_size), lay.cube_size, self.fingers
        )

        in_band = (self.fingers >= size_band_lo) & (self.fingers < size_band_hi)
        candidate = captured & in_band
        if candidate.any():
            origin = self.cube_pos[rows, nearest]
            toward_wrist = -self.ee_rot[:, :, 2]
            blocked = np.zeros(self.size, dtype=bool)
            for box in self._boxes:
                blocked |= _ray_hits_box(origin, toward_wrist, box, lay.clearance_dist)
            attach = candidate & ~blocked
            if attach.any():
                rel = self.cube_pos[rows, nearest] - self.ee_pos
                g_pos = np.einsum("bji,bj->bi", self.ee_rot, rel)
                g_rot = np.einsum("bji,bjk->bik", self.ee_rot, self.cube_rot[rows, nearest])
                self.grasp_pos = np.where(attach[:, None], g_pos, self.grasp_pos)
                self.grasp_rot = np.where(attach[:, None, None], g_rot, self.grasp_rot)
                self.attached = np.where(attach, nearest, self.attached)

    def _settle_cubes(self) -> None:
        """Drop every free cube onto the highest support below it."""
        lay = self.layout
        half = lay.cube_size / 2.0
        tol = 1e-9
        for c in range(self.cube_pos.shape[1]):
            free = self.attached != c
            pos = self.cube_pos[:, c]
            bottom = pos[:, 2] - half
            support = np.zeros(self.size)  # table top
            for box in lay.boxes:
                inside = (
                    (pos[:, 0] >= box[0] - half)
                    & (pos[:, 0] <= box[1] + half)
                    & (pos[:, 1] >= box[2] - half)
                    & (pos[:, 1] <= box[3] + half)
                )
                below = box[5] <= bottom + tol
                support = np.where(inside & below, np.maximum(support, box[5]), support)
            for other in range(self.cube_pos.shape[1]):
                if other == c:
                    continue
                opos = self.cube_pos[:, other]
                overlap = (np.abs(pos[:, 0] - opos[:, 0]) <= lay.cube_size) & (
                    np.abs(pos[:, 1] - opos[:, 1]) <= lay.cube_size
                )
                top = opos[:, 2] + half
                below = top <= bottom + tol
                support = np.where(overlap & below, np.maximum(support, top), support)
            new_z = support + half
            self.cube_pos[:, c, 2] = np.where(free, new_z, pos[:, 2])

    # -- snapshots ---------------------------------------------------------------
    _ARRAYS = (
        "ee_pos", "ee_rot", "fingers", "cube_pos", "cube_rot", "attached",
        "grasp_pos", "grasp_rot", "dyn_pos", "dyn_vel", "dyn_radius",
    )
    _SHARED = ("dyn_pos", "dyn_vel", "dyn_radius")

    def snapshot(self) -> "GripperSnapshot":
        data = {name: getattr(self, name).copy() for name in self._ARRAYS}
        return GripperSnapshot(layout=self.layout, data=data)

    def extract(self, k: int) -> "GripperBatch":
        out = GripperBatch(self.layout, size=1)
        for name in self._ARRAYS:
            arr = getattr(self, name)
            if name in self._SHARED:
                setattr(out, name, arr.copy())
            else:
                setattr(out, name, arr[k : k + 1].copy())
        return out

    def state_equal(self, other: "GripperBatch") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in self._ARRAYS
        )

    def summary(self, sample: int = 0) -> dict:
        return {
            "ee": self.ee_pos[sample].tolist(),
            "fingers": float(self.fingers[sample]),
            "cubes": self.cube_pos[sample].tolist(),
            "attached": int(self.attached[sample]),
            "dyn_obstacles": self.dyn_pos.tolist(),
        }


@dataclass
class GripperSnapshot:
    layout: GripperLayout
    data: dict

    @property
    def probe_dim(self) -> int:
        return 3

    def restore(self, size: int | None = None) -> GripperBatch:
        src = self.data["ee_pos"].shape[0]
        if size is None:
            size = src
        if src not in (1, size):
            raise ValueError("snapshot can only be tiled from a single-sample batch")
        for name in GripperBatch._ARRAYS:
            if name not in self.data:
                raise ValueError(f"corrupt snapshot: missing '{name}'")
        batch = GripperBatch(self.layout, size=size)
        for name in GripperBatch._ARRAYS:
            arr = self.data[name]
            if name in GripperBatch._SHARED or src == size:
                setattr(batch, name, arr.copy())
            else:
                setattr(batch, name, np.repeat(arr, size, axis=0))
        return batch


def apply_gripper_disturbance(batch: GripperBatch, event: dict) -> None:
    kind = event["kind"]
    if kind == "teleport_cube":
        idx = int(event["index"])
        if idx >= batch.cube_pos.shape[1]:
            raise KeyError(f"no cube with index {idx}")
        batch.cube_pos[:, idx] = np.asarray(event["pos"], dtype=np.float64)
        if "yaw" in event:
            batch.cube_rot[:, idx] = _yaw_rot(float(event["yaw"]))
        batch.attached = np.where(batch.attached == idx, -1, batch.attached)
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
        batch.dyn_radius = np.append(batch.dyn_radius, float(event.get("radius", 0.03)))
    else:
        raise KeyError(f"unknown gripper disturbance '{kind}'")
