from mmtamp.worlds.planar import PlanarBatch, PlanarLayout, PlanarSnapshot
from mmtamp.worlds.gripper import GripperBatch, GripperLayout, GripperSnapshot

__all__ = [
    "PlanarBatch",
    "PlanarLayout",
    "PlanarSnapshot",
    "GripperBatch",
    "GripperLayout",
    "GripperSnapshot",
]
