"""Anatomical plane normals and limb-to-plane angles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CollinearShoulders, ZeroVector
from .motion import PLANES, ActivityDefinition, SkeletonFrame, SkeletonSequence

NORM_TOL = 1e-9
DEFAULT_FLOOR = (0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class PlaneSet:
    v_frontal: np.ndarray
    v_sagittal: np.ndarray
    v_transverse: np.ndarray
    floor_offset: float = 0.0

    def normal(self, plane: str) -> np.ndarray:
        return getattr(self, f"v_{plane}")


@dataclass(frozen=True)
class AngleFrame:
    frontal: float
    sagittal: float
    transverse: float

    def __post_init__(self):
        for plane in PLANES:
            v = getattr(self, plane)
            if not -90.0 <= v <= 90.0:
                raise ValueError(f"{plane} angle {v} outside [-90, 90]")


@dataclass(frozen=True, eq=False)
class AngleSequence:
    """Per-frame plane angles in degrees; ``values`` columns follow PLANES."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("angle values must have shape (T, 3)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, t: int) -> AngleFrame:
        return AngleFrame(*(float(x) for x in self.values[t]))

    def track(self, plane: str) -> np.ndarray:
        return self.values[:, PLANES.index(plane)]

    def slice(self, start: int, stop: int) -> "AngleSequence":
        return AngleSequence(self.values[start:stop])


def _floor_normal(floor: Sequence[float]) -> np.ndarray:
    floor = np.asarray(floor, dtype=float)
    if floor.shape != (4,):
        raise ValueError("floor plane must be (a, b, c, d)")
    normal = floor[:3]
    if np.linalg.norm(normal) <= NORM_TOL:
        raise ZeroVector()
    return normal


def _frontal_normals(p_sc: np.ndarray, p_ls: np.ndarray, p_rs: np.ndarray) -> np.ndarray:
    v = np.cross(p_sc - p_ls, p_rs - p_ls)
    bad = np.linalg.norm(np.atleast_2d(v), axis=1) <= NORM_TOL
    if bad.any():
        raise CollinearShoulders(int(np.argmax(bad)) if v.ndim == 2 else None)
    return v


def estimate_planes(frame: SkeletonFrame, floor: Sequence[float] = DEFAULT_FLOOR) -> PlaneSet:
    """Plane normals from one frame: the floor normal is the transverse
    normal, the shoulder triangle gives the frontal normal and their cross
    product the sagittal normal. The frontal normal is not orthogonalized
    against the floor."""
    v_t = _floor_normal(floor)
    v_f = _frontal_normals(frame.position("shoulder_center"),
                           frame.position("left_shoulder"),
                           frame.position("right_shoulder"))
    v_s = np.cross(v_f, v_t)
    return PlaneSet(v_f, v_s, v_t, float(floor[3]))


def _angles(limb: np.ndarray, normal: np.ndarray) -> np.ndarray:
    # 90 - arccos(cos) written as atan2, which stays accurate near +/-90
    along = np.sum(limb * normal, axis=-1)
    across = np.linalg.norm(np.cross(limb, normal), axis=-1)
    return np.degrees(np.arctan2(along, across))


def plane_angle(limb, normal) -> float:
    """Signed angle in degrees between a limb vector and a plane given by its
    normal; positive on the side the normal points to."""
    limb = np.asarray(limb, dtype=float)
    normal = np.asarray(normal, dtype=float)
    if np.linalg.norm(limb) <= NORM_TOL or np.linalg.norm(normal) <= NORM_TOL:
        raise ZeroVector()
    return float(_angles(limb, normal))


def angle_sequence(seq: SkeletonSequence, definition: ActivityDefinition,
                   floor: Sequence[float] = DEFAULT_FLOOR, per_frame: bool = True) -> AngleSequence:
    """Frontal, sagittal and transverse angles of the activity's limb.

    With ``per_frame=False`` the plane normals are estimated once, from the
    shoulder positions averaged over the repetition.
    """
    v_t = _floor_normal(floor)
    p_sc = seq.joint("shoulder_center")
    p_ls = seq.joint("left_shoulder")
    p_rs = seq.joint("right_shoulder")
    if per_frame:
        v_f = _frontal_normals(p_sc, p_ls, p_rs)
    else:
        v_f = _frontal_normals(p_sc.mean(0), p_ls.mean(0), p_rs.mean(0))
        v_f = np.broadcast_to(v_f, p_sc.shape)
    v_s = np.cross(v_f, v_t)
    bad = np.linalg.norm(v_s, axis=1) <= NORM_TOL
    if bad.any():
        raise ZeroVector(int(np.argmax(bad)))
    limb = seq.joint(definition.limb_distal_joint) - seq.joint(definition.limb_proximal_joint)
    bad = np.linalg.norm(limb, axis=1) <= NORM_TOL
    if bad.any():
        raise ZeroVector(int(np.argmax(bad)))
    normals = {"frontal": v_f, "sagittal": v_s, "transverse": np.broadcast_to(v_t, limb.shape)}
    return AngleSequence(np.stack([_angles(limb, normals[p]) for p in PLANES], axis=1))
