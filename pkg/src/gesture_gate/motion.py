"""Skeleton recordings: domain types, file I/O and body-relative normalization.

Coordinate convention (fixed, also used by :mod:`gesture_gate.synth`): Y points
up, the subject's left shoulder has the smaller X and the subject faces -Z.
With that labeling the frontal-plane normal points forward, the sagittal
normal points to the subject's right and the transverse normal points up.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateReference,
    MissingJoint,
    NonMonotonicTimestamp,
    ParseError,
)

JOINTS = (
    "shoulder_center",
    "left_shoulder",
    "right_shoulder",
    "hip_center",
    "left_hip",
    "right_hip",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "left_foot",
    "right_foot",
)

LABELS = ("correct", "error1", "error2", "unlabeled")
PLANES = ("frontal", "sagittal", "transverse")

REFERENCE_TOL = 1e-9


@dataclass(frozen=True)
class Joint:
    name: str
    position: np.ndarray

    def __post_init__(self):
        if self.name not in JOINTS:
            raise ValueError(f"unknown joint {self.name!r}")
        pos = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError(f"joint {self.name!r} has non-finite position")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class SkeletonFrame:
    timestamp: float
    joints: Mapping[str, Joint]

    def position(self, name: str) -> np.ndarray:
        return self.joints[name].position


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """A recorded repetition.

    Positions are held as one ``(T, J, 3)`` array whose second axis follows
    ``joint_names``; :attr:`frames` gives the per-frame view.
    """

    timestamps: np.ndarray
    joint_names: tuple[str, ...]
    positions: np.ndarray
    activity_id: str = ""
    subject_id: str = ""
    label: str = "unlabeled"

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        names = tuple(self.joint_names)
        if ts.ndim != 1 or ts.size < 2:
            raise ValueError("a skeleton sequence needs at least 2 frames")
        if pos.shape != (ts.size, len(names), 3):
            raise ValueError(f"positions shape {pos.shape} does not match "
                             f"({ts.size}, {len(names)}, 3)")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        for name in names:
            if name not in JOINTS:
                raise ValueError(f"unknown joint {name!r}")
        for j, name in enumerate(names):
            bad = ~np.all(np.isfinite(pos[:, j, :]), axis=1)
            if bad.any():
                raise MissingJoint(int(np.argmax(bad)), name)
        steps = np.diff(ts)
        if np.any(steps <= 0):
            raise NonMonotonicTimestamp(int(np.argmax(steps <= 0)) + 1)
        ts.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "joint_names", names)

    def __len__(self) -> int:
        return self.timestamps.size

    def joint(self, name: str) -> np.ndarray:
        """``(T, 3)`` trajectory of one joint."""
        try:
            return self.positions[:, self.joint_names.index(name), :]
        except ValueError:
            raise MissingJoint(0, name) from None

    @property
    def frames(self) -> list[SkeletonFrame]:
        return list(self.iter_frames())

    def iter_frames(self) -> Iterator[SkeletonFrame]:
        for t, ts in enumerate(self.timestamps):
            yield SkeletonFrame(
                float(ts),
                {n: Joint(n, self.positions[t, j]) for j, n in enumerate(self.joint_names)},
            )

    def slice(self, start: int, stop: int) -> "SkeletonSequence":
        return SkeletonSequence(self.timestamps[start:stop], self.joint_names,
                                self.positions[start:stop], self.activity_id,
                                self.subject_id, self.label)

    @classmethod
    def from_frames(cls, frames: Sequence[SkeletonFrame], **meta) -> "SkeletonSequence":
        if not frames:
            raise ValueError("no frames")
        names = tuple(frames[0].joints)
        pos = np.full((len(frames), len(names), 3), np.nan)
        for t, frame in enumerate(frames):
            for j, name in enumerate(names):
                if name not in frame.joints:
                    raise MissingJoint(t, name)
                pos[t, j] = frame.joints[name].position
        return cls(np.array([f.timestamp for f in frames]), names, pos, **meta)


@dataclass(frozen=True)
class ActivityDefinition:
    """What is measured for one exercise.

    ``error1_sign`` is the sign of the deviation-plane angle change that the
    exercise's *Error 1* produces (Error 2 is the opposite direction).
    ``trajectory_joints`` are the joints whose normalized coordinates feed the
    coordinate pipelines; by default only the distal limb joint.
    """

    activity_id: str
    limb_proximal_joint: str
    limb_distal_joint: str
    body_region: str
    deviation_plane: str
    primary_plane: str
    error1_sign: int = 1
    trajectory_joints: tuple[str, ...] = ()

    def __post_init__(self):
        if self.limb_proximal_joint == self.limb_distal_joint:
            raise ValueError("limb joints must differ")
        for j in (self.limb_proximal_joint, self.limb_distal_joint, *self.trajectory_joints):
            if j not in JOINTS:
                raise ValueError(f"unknown joint {j!r}")
        if self.body_region not in ("upper", "lower"):
            raise ValueError(f"body_region must be upper or lower, got {self.body_region!r}")
        for p in (self.deviation_plane, self.primary_plane):
            if p not in PLANES:
                raise ValueError(f"unknown plane {p!r}")
        if self.error1_sign not in (-1, 1):
            raise ValueError("error1_sign must be +1 or -1")
        if not self.trajectory_joints:
            object.__setattr__(self, "trajectory_joints", (self.limb_distal_joint,))

    @property
    def reference_joints(self) -> tuple[str, str, str]:
        """(center, left, right) used for normalization."""
        if self.body_region == "upper":
            return ("shoulder_center", "left_shoulder", "right_shoulder")
        return ("hip_center", "left_hip", "right_hip")

    @property
    def required_joints(self) -> tuple[str, ...]:
        need = ["shoulder_center", "left_shoulder", "right_shoulder",
                *self.reference_joints, self.limb_proximal_joint,
                self.limb_distal_joint, *self.trajectory_joints]
        return tuple(dict.fromkeys(need))


def _act(aid, prox, dist, region, dev, primary, sign):
    return ActivityDefinition(aid, prox, dist, region, dev, primary, sign)


# Right-side limbs throughout. Error directions: abduction errors move the limb
# toward the front (+frontal) / back; flexion and extension errors move it away
# from (+sagittal) / toward the body; rotation Error 1 moves it toward the floor
# (-transverse).
ACTIVITIES: dict[str, ActivityDefinition] = {
    a.activity_id: a
    for a in (
        _act("shoulder_extension", "right_shoulder", "right_wrist", "upper", "sagittal", "transverse", 1),
        _act("shoulder_flexion", "right_shoulder", "right_wrist", "upper", "sagittal", "transverse", 1),
        _act("shoulder_abduction", "right_shoulder", "right_wrist", "upper", "frontal", "transverse", 1),
        _act("hip_extension", "right_hip", "right_ankle", "lower", "sagittal", "transverse", 1),
        _act("hip_flexion", "right_hip", "right_ankle", "lower", "sagittal", "transverse", 1),
        _act("hip_abduction", "right_hip", "right_ankle", "lower", "frontal", "transverse", 1),
        _act("shoulder_internal_rotation", "right_elbow", "right_wrist", "upper", "transverse", "sagittal", -1),
        _act("shoulder_external_rotation", "right_elbow", "right_wrist", "upper", "transverse", "sagittal", -1),
        _act("elbow_flexion", "right_elbow", "right_wrist", "upper", "sagittal", "transverse", 1),
        _act("elbow_extension", "right_elbow", "right_wrist", "upper", "sagittal", "transverse", 1),
    )
}


def get_activity(activity_id: str) -> ActivityDefinition:
    try:
        return ACTIVITIES[activity_id]
    except KeyError:
        raise KeyError(f"unknown activity {activity_id!r}; "
                       f"known: {', '.join(ACTIVITIES)}") from None


# ---------------------------------------------------------------------------
# file formats


def _check_required(names: Sequence[str], required: Iterable[str] | None):
    for joint in required or ():
        if joint not in names:
            raise MissingJoint(0, joint)


def _read_csv(path: Path, required) -> tuple[np.ndarray, tuple[str, ...], np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t" or (len(header) - 1) % 3:
        raise ParseError(f"{path}: header must be t followed by <joint>_x,_y,_z triples")
    names = []
    for k in range(1, len(header), 3):
        stems = {h.rsplit("_", 1)[0] for h in header[k:k + 3]}
        axes = [h.rsplit("_", 1)[-1] for h in header[k:k + 3]]
        if len(stems) != 1 or axes != ["x", "y", "z"]:
            raise ParseError(f"{path}: malformed joint columns {header[k:k + 3]}")
        names.append(stems.pop())
    _check_required(names, required)
    body = [r for r in rows[1:] if r]
    ts = np.empty(len(body))
    pos = np.full((len(body), len(names), 3), np.nan)
    for t, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {t + 1} has {len(row)} fields, expected {len(header)}")
        try:
            ts[t] = float(row[0])
        except ValueError as exc:
            raise ParseError(f"{path}: bad timestamp in row {t + 1}") from exc
        for j, name in enumerate(names):
            cells = row[1 + 3 * j:4 + 3 * j]
            if any(not c.strip() for c in cells):
                raise MissingJoint(t, name)
            try:
                pos[t, j] = [float(c) for c in cells]
            except ValueError as exc:
                raise ParseError(f"{path}: bad coordinate in row {t + 1}") from exc
    return ts, tuple(names), pos


def _read_json(path: Path, required) -> tuple[np.ndarray, tuple[str, ...], np.ndarray, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        frames = doc["frames"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not frames:
        raise ParseError(f"{path}: no frames")
    names: list[str] = list(frames[0]["joints"])
    for joint in required or ():
        if joint not in names:
            names.append(joint)
    ts = np.empty(len(frames))
    pos = np.full((len(frames), len(names), 3), np.nan)
    for t, frame in enumerate(frames):
        try:
            ts[t] = float(frame["t"])
            joints = frame["joints"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad frame {t}") from exc
        for j, name in enumerate(names):
            if name not in joints or joints[name] is None:
                raise MissingJoint(t, name)
            try:
                pos[t, j] = [float(v) for v in joints[name]]
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: bad coordinates for {name} in frame {t}") from exc
    meta = {k: doc[k] for k in ("activity_id", "subject_id", "label") if k in doc}
    return ts, tuple(names), pos, meta


def load_sequence(path, format: str | None = None, *, required: Iterable[str] | None = None,
                  activity_id: str = "", subject_id: str = "",
                  label: str = "unlabeled") -> SkeletonSequence:
    """Read a recording from CSV or JSON.

    ``format`` defaults to the file suffix. CSV files carry no metadata, so
    ``activity_id``, ``subject_id`` and ``label`` come from the keywords; for
    JSON the document's own fields win.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    meta = {"activity_id": activity_id, "subject_id": subject_id, "label": label}
    if fmt == "csv":
        ts, names, pos = _read_csv(path, required)
    elif fmt == "json":
        ts, names, pos, doc_meta = _read_json(path, required)
        meta.update(doc_meta)
    else:
        raise ParseError(f"{path}: unsupported format {fmt!r}")
    if ts.size < 2:
        raise ParseError(f"{path}: need at least 2 frames, found {ts.size}")
    if meta["label"] not in LABELS:
        raise ParseError(f"{path}: unknown label {meta['label']!r}")
    return SkeletonSequence(ts, names, pos, **{k: str(v) for k, v in meta.items()})


def _fmt(x: float) -> str:
    return repr(float(x))


def save_sequence(seq: SkeletonSequence, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        header = ["t"] + [f"{n}_{a}" for n in seq.joint_names for a in "xyz"]
        lines = [",".join(header)]
        for t in range(len(seq)):
            lines.append(",".join([_fmt(seq.timestamps[t])]
                                  + [_fmt(v) for v in seq.positions[t].ravel()]))
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        doc = {
            "activity_id": seq.activity_id,
            "subject_id": seq.subject_id,
            "label": seq.label,
            "frames": [
                {"t": float(seq.timestamps[t]),
                 "joints": {n: seq.positions[t, j].tolist() for j, n in enumerate(seq.joint_names)}}
                for t in range(len(seq))
            ],
        }
        text = json.dumps(doc)
    else:
        raise ValueError(f"unsupported format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True, eq=False)
class NormalizedSequence:
    """Limb joint coordinates relative to the body reference.

    ``frames`` has shape ``(T, K, 3)`` over ``joints``; ``scale`` holds the
    per-frame reference distance that was divided out.
    """

    frames: np.ndarray
    joints: tuple[str, ...]
    scale: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("scale must be positive")

    def series(self, joint: str | None = None) -> np.ndarray:
        """``(T, 3)`` normalized trajectory of one joint (default: the first)."""
        j = 0 if joint is None else self.joints.index(joint)
        return self.frames[:, j, :]


def normalize(seq: SkeletonSequence, definition: ActivityDefinition,
              joints: Sequence[str] | None = None) -> NormalizedSequence:
    """Express limb joints relative to the shoulder (or hip) center, in units
    of the shoulder (or hip) width. The reference is recomputed every frame."""
    joints = tuple(joints or definition.trajectory_joints)
    center_name, left_name, right_name = definition.reference_joints
    center = seq.joint(center_name)
    width = np.linalg.norm(seq.joint(left_name) - seq.joint(right_name), axis=1)
    bad = width <= REFERENCE_TOL
    if bad.any():
        raise DegenerateReference(int(np.argmax(bad)))
    out = np.stack([(seq.joint(j) - center) / width[:, None] for j in joints], axis=1)
    return NormalizedSequence(out, joints, width)

