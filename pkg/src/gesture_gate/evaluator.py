"""Phase segmentation, interval calibration, verdicts and experiments.

Four pipelines are supported:

``mddtw_coords`` / ``mddtw_angles``
    DTW distance of the normalized distal-joint trajectory (or of the
    three-angle track) to a template chosen from the correct repetitions.
``hmm_coords`` / ``hmm_angles``
    One discrete HMM per characteristic (x/y/z coordinate or plane angle),
    scored by per-symbol forward log-likelihood.

Each pipeline trains separate artifacts for the two movement phases, and each
artifact carries a mean +/- k*std acceptance interval built from its own
training repetitions.
"""

from __future__ import annotations

import csv
import io
import math
import os
import statistics
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import dtw, hmm
from .errors import (
    InsufficientCalibration,
    MissingActivityData,
    TooShort,
)
from .kinematics import DEFAULT_FLOOR, AngleSequence, angle_sequence
from .motion import PLANES, ActivityDefinition, SkeletonSequence, get_activity, normalize
from .quantizer import AffineMap, SymbolSequence, quantize_sequence

PIPELINES = ("mddtw_coords", "mddtw_angles", "hmm_coords", "hmm_angles")
KINDS = ("dtw_distance", "hmm_per_symbol_loglik")
AXES = ("x", "y", "z")
PHASES = (1, 2)
THREADS_ENV = "GESTURE_GATE_THREADS"


# ---------------------------------------------------------------------------
# phases


@dataclass(frozen=True, eq=False)
class PhasePair:
    phase1: AngleSequence
    phase2: AngleSequence
    split_index: int

    def bounds(self, phase: int) -> tuple[int, int]:
        """Frame slice ``[start, stop)`` of a phase in the source sequence."""
        if phase == 1:
            return 0, self.split_index + 1
        return self.split_index, self.split_index + len(self.phase2)


def split_index(angles: AngleSequence, definition: ActivityDefinition) -> int:
    track = angles.track(definition.primary_plane)
    if track.size < 4:
        raise TooShort(f"need at least 4 frames to split phases, got {track.size}")
    split = int(np.argmax(np.abs(track - track[0])))
    if split < 1 or split > track.size - 2:
        raise TooShort(f"movement peak at frame {split} leaves a phase shorter than 2 frames")
    return split


def segment_phases(angles: AngleSequence, definition: ActivityDefinition) -> PhasePair:
    """Split at the frame where the primary-plane angle is furthest from its
    starting value (earliest such frame); the split frame belongs to both
    phases."""
    split = split_index(angles, definition)
    return PhasePair(angles.slice(0, split + 1), angles.slice(split, len(angles)), split)


# ---------------------------------------------------------------------------
# intervals and verdicts


@dataclass(frozen=True)
class AcceptanceInterval:
    lo: float
    hi: float
    statistic_kind: str
    mean: float
    std: float
    k_sigma: float = 2.0

    def __post_init__(self):
        if self.statistic_kind not in KINDS:
            raise ValueError(f"unknown statistic kind {self.statistic_kind!r}")
        if not self.lo <= self.hi:
            raise ValueError("interval lower bound exceeds upper bound")

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "statistic_kind": self.statistic_kind,
                "mean": self.mean, "std": self.std, "k_sigma": self.k_sigma}

    @classmethod
    def from_dict(cls, doc: dict) -> "AcceptanceInterval":
        return cls(**doc)


def calibrate(values: Sequence[float], kind: str, k_sigma: float = 2.0) -> AcceptanceInterval:
    """Mean +/- ``k_sigma`` sample standard deviations (n - 1 denominator)."""
    values = [float(v) for v in values]
    if len(values) < 2:
        raise InsufficientCalibration(f"need at least 2 calibration values, got {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise InsufficientCalibration("calibration values must be finite")
    if k_sigma <= 0:
        raise ValueError("k_sigma must be positive")
    mean = statistics.mean(values)
    std = statistics.stdev(values, mean)
    return AcceptanceInterval(mean - k_sigma * std, mean + k_sigma * std, kind, mean, std, k_sigma)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    statistic: float
    interval: AcceptanceInterval | None
    pipeline: str
    phase: int
    per_characteristic: dict | None = None


def evaluate_dtw(test, template: dtw.DtwTemplate, interval: AcceptanceInterval,
                 pipeline: str = "mddtw_coords", phase: int = 1, normalize: bool = True) -> Verdict:
    if interval.statistic_kind != "dtw_distance":
        raise ValueError("interval was not calibrated on DTW distances")
    stat = dtw.mddtw_distance(test, template.series, normalize)
    return Verdict(interval.contains(stat), stat, interval, pipeline, phase)


def evaluate_hmm(test, model: hmm.HmmModel, interval: AcceptanceInterval,
                 pipeline: str = "hmm_angles", phase: int = 1) -> Verdict:
    if interval.statistic_kind != "hmm_per_symbol_loglik":
        raise ValueError("interval was not calibrated on HMM log-likelihoods")
    stat = hmm.forward(model, test).per_symbol
    return Verdict(interval.contains(stat), stat, interval, pipeline, phase)


def combine(verdicts: dict[str, Verdict]) -> Verdict:
    """Joint verdict over characteristics: rejected when any one rejects.

    The reported statistic is the number of rejecting characteristics.
    """
    first = next(iter(verdicts.values()))
    rejected = sum(not v.accepted for v in verdicts.values())
    return Verdict(rejected == 0, float(rejected), None, first.pipeline, first.phase,
                   {k: (v.statistic, v.accepted) for k, v in verdicts.items()})


# ---------------------------------------------------------------------------
# features and trained artifacts


@dataclass(frozen=True)
class ExperimentConfig:
    pipeline: str = "hmm_angles"
    n_states: int = 5
    topology: str = "left_right"
    k_sigma: float = 2.0
    floor_plane: tuple = DEFAULT_FLOOR
    seed: int = 0
    dtw_normalize: bool = True
    per_frame_planes: bool = True
    workers: int | None = None

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}; choose from {', '.join(PIPELINES)}")
        if self.k_sigma <= 0:
            raise ValueError("k_sigma must be positive")
        if self.n_states < 1:
            raise ValueError("n_states must be positive")
        if self.topology not in hmm.TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        object.__setattr__(self, "floor_plane", tuple(float(v) for v in self.floor_plane))


@dataclass(frozen=True, eq=False)
class Features:
    angles: AngleSequence
    coords: np.ndarray
    phases: PhasePair

    def phase_values(self, kind: str, phase: int) -> np.ndarray:
        start, stop = self.phases.bounds(phase)
        data = self.angles.values if kind == "angles" else self.coords
        return data[start:stop]


def extract_features(seq: SkeletonSequence, definition: ActivityDefinition,
                     floor=DEFAULT_FLOOR, per_frame: bool = True) -> Features:
    angles = angle_sequence(seq, definition, floor, per_frame)
    coords = normalize(seq, definition).series()
    return Features(angles, coords, segment_phases(angles, definition))


def _kind(pipeline: str) -> str:
    return "coords" if pipeline.endswith("coords") else "angles"


def characteristics(pipeline: str) -> tuple[str, ...]:
    if pipeline.startswith("mddtw"):
        return ("vector",)
    return AXES if pipeline == "hmm_coords" else PLANES


@dataclass(frozen=True, eq=False)
class Artifact:
    """A trained template or model for one activity, phase and characteristic."""

    activity_id: str
    pipeline: str
    phase: int
    characteristic: str
    interval: AcceptanceInterval
    template: dtw.DtwTemplate | None = None
    model: hmm.HmmModel | None = None
    coord_map: AffineMap | None = None
    dtw_normalize: bool = True

    def symbols(self, track: np.ndarray) -> SymbolSequence:
        if self.coord_map is not None:
            track = self.coord_map(track)
        return quantize_sequence(track, self.characteristic)

    def verdict(self, values: np.ndarray) -> Verdict:
        """Score the phase feature block ``values`` of shape ``(T, 3)``."""
        if self.template is not None:
            return evaluate_dtw(values, self.template, self.interval, self.pipeline,
                                self.phase, self.dtw_normalize)
        col = characteristics(self.pipeline).index(self.characteristic)
        return evaluate_hmm(self.symbols(values[:, col]), self.model, self.interval,
                            self.pipeline, self.phase)

    def to_dict(self) -> dict:
        doc = {
            "activity_id": self.activity_id,
            "pipeline": self.pipeline,
            "phase": self.phase,
            "characteristic": self.characteristic,
            "interval": self.interval.to_dict(),
        }
        if self.template is not None:
            doc["template"] = {
                "series": self.template.series.tolist(),
                "training_distances": self.template.training_distances.tolist(),
                "index": self.template.index,
                "normalized": self.dtw_normalize,
            }
        if self.model is not None:
            doc["model"] = self.model.to_dict()
        if self.coord_map is not None:
            doc["coord_map"] = {"lo": self.coord_map.lo, "hi": self.coord_map.hi,
                                "span": self.coord_map.span}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Artifact":
        template = model = cmap = None
        norm = True
        if "template" in doc:
            t = doc["template"]
            template = dtw.DtwTemplate(np.array(t["series"]), np.array(t["training_distances"]),
                                       t["index"])
            norm = t.get("normalized", True)
        if "model" in doc:
            model = hmm.HmmModel.from_dict(doc["model"])
        if "coord_map" in doc:
            cmap = AffineMap(**doc["coord_map"])
        return cls(doc["activity_id"], doc["pipeline"], doc["phase"], doc["characteristic"],
                   AcceptanceInterval.from_dict(doc["interval"]), template, model, cmap, norm)


def _model_seed(seed: int, *key) -> int:
    tag = zlib.crc32("|".join(map(str, key)).encode())
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def train(features: Sequence[Features], activity_id: str, config: ExperimentConfig) -> list[Artifact]:
    """Fit every artifact one pipeline needs for one activity (both phases)."""
    if len(features) < 2:
        raise InsufficientCalibration(
            f"{activity_id}: need at least 2 correct repetitions, got {len(features)}")
    pipeline = config.pipeline
    kind = _kind(pipeline)
    out = []
    for phase in PHASES:
        blocks = [f.phase_values(kind, phase) for f in features]
        if pipeline.startswith("mddtw"):
            template = dtw.select_template(blocks, config.dtw_normalize)
            interval = calibrate(template.training_distances, "dtw_distance", config.k_sigma)
            out.append(Artifact(activity_id, pipeline, phase, "vector", interval,
                                template=template, dtw_normalize=config.dtw_normalize))
            continue
        for col, name in enumerate(characteristics(pipeline)):
            tracks = [b[:, col] for b in blocks]
            cmap = AffineMap.fit(tracks) if kind == "coords" else None
            symbols = [quantize_sequence(cmap(t) if cmap else t, name) for t in tracks]
            model = hmm.baum_welch(symbols, config.n_states, config.topology,
                                   seed=_model_seed(config.seed, activity_id, phase, name))
            scores = [hmm.forward(model, s).per_symbol for s in symbols]
            interval = calibrate(scores, "hmm_per_symbol_loglik", config.k_sigma)
            model = hmm.HmmModel(model.transition, model.emission, model.initial, model.topology,
                                 model.floor_eps, {**model.trained_on, "activity_id": activity_id,
                                                   "phase": phase, "characteristic": name,
                                                   "pipeline": pipeline},
                                 {"mean": interval.mean, "std": interval.std,
                                  "k_sigma": interval.k_sigma, "lo": interval.lo, "hi": interval.hi})
            out.append(Artifact(activity_id, pipeline, phase, name, interval,
                                model=model, coord_map=cmap))
    return out


def assess(artifacts: Sequence[Artifact], seq: SkeletonSequence, definition: ActivityDefinition,
           config: ExperimentConfig) -> dict[tuple[int, str], Verdict]:
    """Verdicts of one repetition keyed by (phase, characteristic).

    A repetition whose phases cannot be located is rejected outright, with a
    NaN statistic.
    """
    try:
        feats = extract_features(seq, definition, config.floor_plane, config.per_frame_planes)
    except TooShort:
        feats = None
    out = {}
    for art in artifacts:
        if feats is None:
            out[(art.phase, art.characteristic)] = Verdict(False, math.nan, art.interval,
                                                           art.pipeline, art.phase)
        else:
            out[(art.phase, art.characteristic)] = art.verdict(
                feats.phase_values(_kind(art.pipeline), art.phase))
    return out


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ResultRow:
    activity: str
    phase: int
    error_type: str
    pipeline: str
    characteristic: str
    detection_rate_pct: float


CSV_HEADER = ("activity", "phase", "error_type", "pipeline", "characteristic", "detection_rate_pct")


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def extend(self, other: "ResultTable") -> "ResultTable":
        self.rows.extend(other.rows)
        return self

    def sorted(self) -> "ResultTable":
        order = {p: k for k, p in enumerate(PIPELINES)}
        return ResultTable(sorted(self.rows, key=lambda r: (
            order.get(r.pipeline, 99), r.activity, r.phase, r.error_type, r.characteristic)))

    def rate(self, activity, phase, error_type, pipeline, characteristic=None) -> float:
        if characteristic is None:
            characteristic = "vector" if pipeline.startswith("mddtw") else "max"
        for r in self.rows:
            if (r.activity, r.phase, r.error_type, r.pipeline, r.characteristic) == (
                    activity, phase, error_type, pipeline, characteristic):
                return r.detection_rate_pct
        raise KeyError((activity, phase, error_type, pipeline, characteristic))

    @property
    def activities(self) -> list[str]:
        return list(dict.fromkeys(r.activity for r in self.rows))

    @property
    def error_types(self) -> list[str]:
        return sorted({r.error_type for r in self.rows})

    @property
    def pipelines(self) -> list[str]:
        return [p for p in PIPELINES if any(r.pipeline == p for r in self.rows)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.sorted().rows:
            writer.writerow([r.activity, r.phase, r.error_type, r.pipeline, r.characteristic,
                             f"{r.detection_rate_pct:.2f}"])
        return buf.getvalue()

    def averages(self) -> dict[tuple[int, str, str, str], float]:
        """Mean detection rate over activities keyed by
        (phase, pipeline, error_type, reading) where reading is the summary
        characteristic (``vector`` for DTW, ``max`` for HMM)."""
        acc = defaultdict(list)
        for r in self.rows:
            if r.characteristic in ("vector", "max"):
                acc[(r.phase, r.pipeline, r.error_type)].append(r.detection_rate_pct)
        return {k: float(np.mean(v)) for k, v in sorted(acc.items())}

    # text layouts ---------------------------------------------------------

    def format_dtw(self, pipeline: str) -> str:
        errs = self.error_types
        head = ["Activity"] + [f"P{p} {e}" for p in PHASES for e in errs]
        body = [[a] + [f"{self.rate(a, p, e, pipeline):.2f}" for p in PHASES for e in errs]
                for a in self._acts(pipeline)]
        return _grid(f"Percentage of error detection, {pipeline}", head, body)

    def format_hmm(self, pipeline: str, phase: int) -> str:
        errs = self.error_types
        chars = characteristics(pipeline)
        head = ["Activity"] + [f"{e} {c}" for e in errs for c in (*chars, "max")]
        body = [[a] + [f"{self.rate(a, phase, e, pipeline, c):.2f}" for e in errs for c in (*chars, "max")]
                for a in self._acts(pipeline)]
        return _grid(f"Error recognition, {pipeline}, phase {phase}", head, body)

    def format_averages(self) -> str:
        avg = self.averages()
        body = []
        for phase in PHASES:
            for feat in ("coords", "angles"):
                for err in self.error_types:
                    for tech, pipe in (("HMM", f"hmm_{feat}"), ("DTW", f"mddtw_{feat}")):
                        if (phase, pipe, err) in avg:
                            body.append([f"Phase {phase}", "Coordinates" if feat == "coords" else "Angles",
                                         err, tech, f"{avg[(phase, pipe, err)]:.2f}"])
        return _grid("Average recognition percentages",
                     ["Phase", "Features", "Error", "Technique", "Rate"], body)

    def table_files(self) -> dict[str, str]:
        """Text tables keyed by file name."""
        out = {}
        for pipe in self.pipelines:
            if pipe.startswith("mddtw"):
                out[f"table_{pipe}.txt"] = self.format_dtw(pipe)
            else:
                for phase in PHASES:
                    out[f"table_{pipe}_phase{phase}.txt"] = self.format_hmm(pipe, phase)
        return out

    def _acts(self, pipeline):
        return list(dict.fromkeys(r.activity for r in self.rows if r.pipeline == pipeline))


def _grid(title: str, head: list[str], body: list[list[str]]) -> str:
    widths = [max(len(row[k]) for row in [head, *body]) for k in range(len(head))]
    line = "+".join("-" * (w + 2) for w in widths)
    fmt = lambda row: " | ".join(c.ljust(w) for c, w in zip(row, widths))
    return "\n".join([title, line, fmt(head), line, *map(fmt, body), line]) + "\n"


def _sequence(item) -> SkeletonSequence:
    return getattr(item, "sequence", item)


def _run_activity(args) -> list[ResultRow]:
    activity_id, config, correct, errors = args
    definition = get_activity(activity_id)
    feats = [extract_features(s, definition, config.floor_plane, config.per_frame_planes)
             for s in correct]
    artifacts = train(feats, activity_id, config)
    by_type = defaultdict(list)
    for s in errors:
        by_type[s.label].append(s)
    chars = characteristics(config.pipeline)
    rows = []
    for err, seqs in sorted(by_type.items()):
        verdicts = [assess(artifacts, s, definition, config) for s in seqs]
        for phase in PHASES:
            rates = {}
            for c in chars:
                rejected = sum(not v[(phase, c)].accepted for v in verdicts)
                rates[c] = 100.0 * rejected / len(verdicts)
                rows.append(ResultRow(activity_id, phase, err, config.pipeline, c, rates[c]))
            if len(chars) > 1:
                rows.append(ResultRow(activity_id, phase, err, config.pipeline, "max",
                                      max(rates.values())))
                anyrej = sum(any(not v[(phase, c)].accepted for c in chars) for v in verdicts)
                rows.append(ResultRow(activity_id, phase, err, config.pipeline, "any",
                                      100.0 * anyrej / len(verdicts)))
    return rows


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    n = requested or os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, n)


def run_experiment(config: ExperimentConfig, correct: Iterable, errors: Iterable) -> ResultTable:
    """Detection rates of one pipeline over every activity in ``correct``.

    ``correct`` and ``errors`` hold :class:`SkeletonSequence` objects (or
    samples wrapping them). Error repetitions are grouped by their label, so
    passing the correct set again as ``errors`` runs the null experiment under
    error type ``correct``.
    """
    by_act: dict[str, list] = defaultdict(list)
    err_by_act: dict[str, list] = defaultdict(list)
    for s in map(_sequence, correct):
        by_act[s.activity_id].append(s)
    for s in map(_sequence, errors):
        err_by_act[s.activity_id].append(s)
    if not by_act:
        raise MissingActivityData("no correct repetitions given")
    jobs = []
    for aid in sorted(by_act):
        if not err_by_act.get(aid):
            raise MissingActivityData(f"no error repetitions for activity {aid!r}")
        jobs.append((aid, config, by_act[aid], err_by_act[aid]))
    workers = min(worker_count(config.workers), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_activity, jobs))
    else:
        results = [_run_activity(j) for j in jobs]
    return ResultTable([r for rows in results for r in rows]).sorted()

