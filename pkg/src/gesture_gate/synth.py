"""Synthetic repetitions of the ten exercises, correct and deviated.

Each exercise drives one plane angle of the limb along a half-sine
``base -> base + sign*peak -> base`` and, for erroneous repetitions, adds a
half-sine offset to the angle with a second plane. The limb direction is then
rebuilt from those two angles: for orthonormal plane normals the sines of the
three plane angles are the components of the unit limb vector, so the third
component follows from unit length and a fixed sign. The torso stands upright,
which keeps the three estimated normals orthogonal.

Two angles cannot both be scripted when the limb lies close to a plane
normal: |deviation| must not exceed 90 - |primary|. Offsets beyond that bound
are clipped, and :func:`script_angles` reports the clipped values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .motion import ACTIVITIES, JOINTS, PLANES, SkeletonSequence, load_sequence, save_sequence

FPS = 30.0
DEFAULT_FRAMES = 60
DEFAULT_NOISE = 2.0
DEFAULT_MAGNITUDE = 30.0

# unit normals of the three planes for the upright synthetic torso
NORMALS = {
    "frontal": np.array([0.0, 0.0, -1.0]),
    "sagittal": np.array([1.0, 0.0, 0.0]),
    "transverse": np.array([0.0, 1.0, 0.0]),
}

SHOULDER_Y, HIP_Y, DEPTH = 1.40, 0.90, 2.5
TORSO = {
    "shoulder_center": (0.0, SHOULDER_Y + 0.10, DEPTH),
    "left_shoulder": (-0.175, SHOULDER_Y, DEPTH),
    "right_shoulder": (0.175, SHOULDER_Y, DEPTH),
    "hip_center": (0.0, HIP_Y + 0.05, DEPTH),
    "left_hip": (-0.15, HIP_Y, DEPTH),
    "right_hip": (0.15, HIP_Y, DEPTH),
}
UPPER_ARM, FOREARM, HAND = 0.30, 0.25, 0.08
THIGH, SHANK = 0.45, 0.43
FOOT = np.array([0.0, -0.05, -0.12])
DOWN = np.array([0.0, -1.0, 0.0])


@dataclass(frozen=True)
class Motion:
    """How an exercise moves its limb.

    ``segment`` is ``arm`` (shoulder to wrist), ``leg`` (hip to ankle) or
    ``forearm`` (elbow to wrist, upper arm hanging). ``third_sign`` fixes the
    direction of the limb component along the remaining plane's normal.
    """

    segment: str
    base: float
    sign: int
    peak: float
    third_sign: int


MOTIONS = {
    "shoulder_extension": Motion("arm", -90.0, 1, 50.0, -1),
    "shoulder_flexion": Motion("arm", -90.0, 1, 120.0, 1),
    "shoulder_abduction": Motion("arm", -90.0, 1, 90.0, 1),
    "hip_extension": Motion("leg", -90.0, 1, 40.0, -1),
    "hip_flexion": Motion("leg", -90.0, 1, 60.0, 1),
    "hip_abduction": Motion("leg", -90.0, 1, 40.0, 1),
    "shoulder_internal_rotation": Motion("forearm", 0.0, -1, 50.0, 1),
    "shoulder_external_rotation": Motion("forearm", 0.0, 1, 50.0, 1),
    "elbow_flexion": Motion("forearm", -90.0, 1, 120.0, 1),
    "elbow_extension": Motion("forearm", 40.0, -1, 90.0, 1),
}


@dataclass(frozen=True)
class MotionScript:
    activity_id: str
    duration_frames: int = DEFAULT_FRAMES
    peak_angle: float | None = None
    deviation: str = "none"
    deviation_magnitude: float = DEFAULT_MAGNITUDE
    noise_std: float = DEFAULT_NOISE
    seed: int = 0
    subject_id: str = ""

    def __post_init__(self):
        if self.activity_id not in MOTIONS:
            raise ValueError(f"unknown activity {self.activity_id!r}")
        if self.duration_frames < 8:
            raise ValueError("duration_frames must be at least 8")
        if not 0.0 <= self.deviation_magnitude <= 60.0:
            raise ValueError("deviation_magnitude must lie in [0, 60]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.deviation not in ("none", "error1", "error2"):
            raise ValueError(f"unknown deviation {self.deviation!r}")
        if self.peak_angle is None:
            object.__setattr__(self, "peak_angle", MOTIONS[self.activity_id].peak)

    @property
    def label(self) -> str:
        return "correct" if self.deviation == "none" else self.deviation


def _half_sine(n: int) -> np.ndarray:
    return np.sin(np.pi * np.arange(n) / (n - 1))


def script_angles(script: MotionScript) -> np.ndarray:
    """``(T, 3)`` plane angles (PLANES order) the generated limb realizes."""
    definition = ACTIVITIES[script.activity_id]
    motion = MOTIONS[script.activity_id]
    n = script.duration_frames
    shape = _half_sine(n)
    primary = motion.base + motion.sign * script.peak_angle * shape
    deviation = np.zeros(n)
    if script.deviation != "none":
        direction = definition.error1_sign * (1 if script.deviation == "error1" else -1)
        deviation = direction * script.deviation_magnitude * shape
    if script.noise_std > 0:
        rng = np.random.default_rng(script.seed)
        noise = rng.normal(0.0, script.noise_std, (2, n))
        primary = primary + noise[0]
        deviation = deviation + noise[1]
    primary = np.clip(primary, -90.0, 90.0)
    room = 90.0 - np.abs(primary)
    deviation = np.clip(deviation, -room, room)
    sp, sd = np.sin(np.radians(primary)), np.sin(np.radians(deviation))
    third = motion.third_sign * np.degrees(np.arcsin(np.sqrt(np.clip(1.0 - sp**2 - sd**2, 0.0, 1.0))))
    out = np.empty((n, 3))
    third_plane = next(p for p in PLANES if p not in (definition.primary_plane, definition.deviation_plane))
    out[:, PLANES.index(definition.primary_plane)] = primary
    out[:, PLANES.index(definition.deviation_plane)] = deviation
    out[:, PLANES.index(third_plane)] = third
    return out


def limb_directions(angles: np.ndarray) -> np.ndarray:
    """Unit limb vectors whose plane angles are ``angles`` (upright torso)."""
    s = np.sin(np.radians(angles))
    return sum(s[:, [k]] * NORMALS[p] for k, p in enumerate(PLANES))


def generate(script: MotionScript) -> SkeletonSequence:
    """Build the skeleton recording for a motion script."""
    motion = MOTIONS[script.activity_id]
    u = limb_directions(script_angles(script))
    n = u.shape[0]
    pos = {name: np.tile(np.array(p), (n, 1)) for name, p in TORSO.items()}
    for side in ("left", "right"):
        sh, hip = pos[f"{side}_shoulder"], pos[f"{side}_hip"]
        pos[f"{side}_elbow"] = sh + UPPER_ARM * DOWN
        pos[f"{side}_wrist"] = sh + (UPPER_ARM + FOREARM) * DOWN
        pos[f"{side}_hand"] = sh + (UPPER_ARM + FOREARM + HAND) * DOWN
        pos[f"{side}_knee"] = hip + THIGH * DOWN
        pos[f"{side}_ankle"] = hip + (THIGH + SHANK) * DOWN
    if motion.segment == "arm":
        sh = pos["right_shoulder"]
        pos["right_elbow"] = sh + UPPER_ARM * u
        pos["right_wrist"] = sh + (UPPER_ARM + FOREARM) * u
        pos["right_hand"] = sh + (UPPER_ARM + FOREARM + HAND) * u
    elif motion.segment == "forearm":
        el = pos["right_elbow"]
        pos["right_wrist"] = el + FOREARM * u
        pos["right_hand"] = el + (FOREARM + HAND) * u
    else:
        hip = pos["right_hip"]
        pos["right_knee"] = hip + THIGH * u
        pos["right_ankle"] = hip + (THIGH + SHANK) * u
    for side in ("left", "right"):
        pos[f"{side}_foot"] = pos[f"{side}_ankle"] + FOOT
    positions = np.stack([pos[name] for name in JOINTS], axis=1)
    return SkeletonSequence(np.arange(n) / FPS, JOINTS, positions, script.activity_id,
                            script.subject_id, script.label)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True, eq=False)
class Sample:
    sequence: SkeletonSequence
    script: MotionScript | None = None
    source: str = ""

    @property
    def activity_id(self) -> str:
        return self.sequence.activity_id

    @property
    def label(self) -> str:
        return self.sequence.label


def generate_dataset(n_correct: int = 42, n_error: int = 100,
                     activities: Iterable[str] | None = None, seed: int = 0,
                     duration_frames: int = DEFAULT_FRAMES, noise_std: float = DEFAULT_NOISE,
                     deviation_magnitude: float = DEFAULT_MAGNITUDE,
                     peak_angles: dict[str, float] | None = None) -> list[Sample]:
    """Correct and erroneous repetitions for each activity.

    Every repetition jitters the peak angle by up to 10% and the duration by
    up to 20% (uniformly). Correct repetitions come from 14 simulated
    subjects, erroneous ones from 10, matching the shape of the recorded
    database. ``n_error`` repetitions are produced for each error type.
    """
    if n_correct < 2 or n_error < 2:
        raise ValueError("need at least 2 correct and 2 erroneous repetitions")
    activities = list(activities or ACTIVITIES)
    seeds = np.random.SeedSequence(seed).spawn(len(activities))
    samples = []
    for aid, ss in zip(activities, seeds):
        if aid not in MOTIONS:
            raise ValueError(f"unknown activity {aid!r}")
        rng = np.random.default_rng(ss)
        peak = (peak_angles or {}).get(aid, MOTIONS[aid].peak)
        plan = [("none", k, f"s{k % 14:02d}") for k in range(n_correct)]
        for dev in ("error1", "error2"):
            plan += [(dev, k, f"e{k % 10:02d}") for k in range(n_error)]
        for dev, _, subject in plan:
            script = MotionScript(
                aid,
                duration_frames=max(8, int(round(duration_frames * rng.uniform(0.8, 1.2)))),
                peak_angle=peak * rng.uniform(0.9, 1.1),
                deviation=dev,
                deviation_magnitude=deviation_magnitude if dev != "none" else 0.0,
                noise_std=noise_std,
                seed=int(rng.integers(2**63 - 1)),
                subject_id=subject,
            )
            samples.append(Sample(generate(script), script))
    return samples


def dataset_hash(samples: Sequence[Sample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        seq = s.sequence
        h.update(f"{seq.activity_id}|{seq.subject_id}|{seq.label}|".encode())
        h.update(np.ascontiguousarray(seq.timestamps).tobytes())
        h.update(np.ascontiguousarray(seq.positions).tobytes())
    return h.hexdigest()


def write_dataset(samples: Sequence[Sample], out_dir, fmt: str = "csv", seed: int | None = None) -> Path:
    """Write every sample plus ``manifest.json`` and return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    counters: dict[tuple[str, str], int] = {}
    for s in samples:
        seq = s.sequence
        key = (seq.activity_id, seq.label)
        k = counters[key] = counters.get(key, -1) + 1
        name = f"{seq.activity_id}_{seq.label}_{k:03d}.{fmt}"
        save_sequence(seq, out_dir / name, fmt)
        entry = {"path": name, "activity_id": seq.activity_id,
                 "subject_id": seq.subject_id, "label": seq.label}
        if s.script is not None:
            entry["seed"] = s.script.seed
            entry["script"] = asdict(s.script)
        entries.append(entry)
    manifest = {"format": fmt, "seed": seed, "hash": dataset_hash(samples), "files": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return path


def read_dataset(manifest_path, exclude: Iterable[str] = ()) -> list[Sample]:
    """Load a dataset written by :func:`write_dataset` (or hand-made in the same
    layout). ``exclude`` lists file paths, as named in the manifest, to drop."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    skip = set(exclude)
    samples = []
    for entry in doc["files"]:
        if entry["path"] in skip:
            continue
        seq = load_sequence(manifest_path.parent / entry["path"],
                            activity_id=entry.get("activity_id", ""),
                            subject_id=entry.get("subject_id", ""),
                            label=entry.get("label", "unlabeled"))
        script = MotionScript(**entry["script"]) if "script" in entry else None
        samples.append(Sample(seq, script, entry["path"]))
    return samples

