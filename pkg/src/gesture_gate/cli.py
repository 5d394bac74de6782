"""Command-line interface: ``gesture-gate {synth,extract,train,evaluate,experiment}``.

Options may also come from a JSON file given with ``--config``; keys are the
long option names with dashes replaced by underscores. Command-line flags win.

Exit codes: 0 success, 2 usage or configuration error, 3 data or training
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .errors import DataError, GestureGateError, NumericalError
from .evaluator import (
    PIPELINES,
    Artifact,
    ExperimentConfig,
    ResultTable,
    assess,
    characteristics,
    extract_features,
    run_experiment,
    train,
)
from .kinematics import DEFAULT_FLOOR
from .motion import ACTIVITIES, PLANES, get_activity, load_sequence
from .quantizer import quantize_sequence
from .synth import DEFAULT_FRAMES, DEFAULT_MAGNITUDE, DEFAULT_NOISE, generate_dataset, read_dataset, write_dataset

log = logging.getLogger("gesture_gate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(Exception):
    pass


DEFAULTS = {
    "seed": 0,
    "correct": 42,
    "errors": 100,
    "format": "csv",
    "noise": DEFAULT_NOISE,
    "magnitude": DEFAULT_MAGNITUDE,
    "frames": DEFAULT_FRAMES,
    "pipeline": "hmm_angles",
    "pipelines": list(PIPELINES),
    "n_states": 5,
    "topology": "left_right",
    "k_sigma": 2.0,
    "floor_plane": list(DEFAULT_FLOOR),
    "once_per_repetition": False,
    "raw_dtw": False,
}


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _settings(args) -> dict:
    """Merge defaults, the optional config file and explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        merged.update(doc)
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    return merged


def _experiment_config(opts: dict, pipeline: str) -> ExperimentConfig:
    floor = opts["floor_plane"]
    if len(floor) != 4:
        raise ConfigError("floor_plane needs four numbers a b c d")
    try:
        return ExperimentConfig(
            pipeline=pipeline,
            n_states=int(opts["n_states"]),
            topology=opts["topology"],
            k_sigma=float(opts["k_sigma"]),
            floor_plane=tuple(float(v) for v in floor),
            seed=int(opts["seed"]),
            dtw_normalize=not opts["raw_dtw"],
            per_frame_planes=not opts["once_per_repetition"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _existing(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"{what} is required")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{what} {path} does not exist")
    return path


def _exclusions(opts) -> list[str]:
    if not opts.get("exclude"):
        return []
    text = _existing(opts["exclude"], "exclude list").read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _activities(names) -> list[str]:
    out = []
    for name in names:
        if name == "all":
            out.extend(ACTIVITIES)
        elif name in ACTIVITIES:
            out.append(name)
        else:
            raise ConfigError(f"unknown activity {name!r}")
    return list(dict.fromkeys(out))


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    opts = _settings(args)
    try:
        samples = generate_dataset(int(opts["correct"]), int(opts["errors"]),
                                   _activities(opts["activity"]), int(opts["seed"]),
                                   int(opts["frames"]), float(opts["noise"]),
                                   float(opts["magnitude"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    manifest = write_dataset(samples, opts["out"], opts["format"], int(opts["seed"]))
    print(manifest)
    return EXIT_OK


def cmd_extract(args) -> int:
    opts = _settings(args)
    path = _existing(opts["input"], "input")
    seq = load_sequence(path)
    activity = opts.get("activity") or seq.activity_id
    if not activity:
        raise ConfigError("--activity is required for files without metadata")
    definition = get_activity(activity)
    cfg = _experiment_config(opts, "hmm_angles")
    feats = extract_features(seq, definition, cfg.floor_plane, cfg.per_frame_planes)
    symbols = [quantize_sequence(feats.angles, p).symbols for p in PLANES]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *PLANES, *(f"symbol_{p}" for p in PLANES), "norm_x", "norm_y", "norm_z", "phase"])
    split = feats.phases.split_index
    for t in range(len(seq)):
        w.writerow([repr(float(seq.timestamps[t])), *(repr(float(v)) for v in feats.angles.values[t]),
                    *(int(s[t]) for s in symbols), *(repr(float(v)) for v in feats.coords[t]),
                    1 if t <= split else 2])
    if opts.get("out"):
        write_atomic(Path(opts["out"]), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _artifact_name(art: Artifact) -> str:
    tail = "" if art.characteristic == "vector" else f"_{art.characteristic}"
    return f"{art.activity_id}_{art.pipeline}_phase{art.phase}{tail}.json"


def cmd_train(args) -> int:
    opts = _settings(args)
    manifest = _existing(opts.get("manifest"), "--manifest")
    samples = read_dataset(manifest, _exclusions(opts))
    out = Path(opts["out"])
    activities = _activities(opts["activity"]) if opts.get("activity") else sorted(
        {s.activity_id for s in samples if s.label == "correct"})
    if not activities:
        raise DataError("the dataset holds no correct repetitions")
    written = []
    for aid in activities:
        definition = get_activity(aid)
        correct = [s.sequence for s in samples if s.activity_id == aid and s.label == "correct"]
        cfg = _experiment_config(opts, opts["pipeline"])
        feats = [extract_features(s, definition, cfg.floor_plane, cfg.per_frame_planes) for s in correct]
        for art in train(feats, aid, cfg):
            path = out / _artifact_name(art)
            write_atomic(path, json.dumps(art.to_dict(), indent=1))
            written.append(path)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    opts = _settings(args)
    model_dir = _existing(opts.get("models"), "--models")
    artifacts = [Artifact.from_dict(json.loads(p.read_text(encoding="utf-8")))
                 for p in sorted(model_dir.glob("*.json"))]
    if not artifacts:
        raise DataError(f"no trained artifacts in {model_dir}")
    tests = []
    if opts.get("manifest"):
        manifest = _existing(opts["manifest"], "--manifest")
        tests += [(s.sequence, s.source) for s in read_dataset(manifest, _exclusions(opts))]
    for name in opts.get("input") or []:
        tests.append((load_sequence(_existing(name, "input"),
                                    activity_id=opts.get("activity") or ""), str(name)))
    if not tests:
        raise ConfigError("give --manifest or --input")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["file", "activity", "label", "pipeline", "phase", "characteristic",
                "statistic", "lo", "hi", "accepted"])
    n_rejected = 0
    for seq, name in tests:
        aid = opts.get("activity") or seq.activity_id
        mine = [a for a in artifacts if a.activity_id == aid]
        if not mine:
            raise DataError(f"no trained artifacts for activity {aid!r}")
        by_pipe = {}
        for a in mine:
            by_pipe.setdefault(a.pipeline, []).append(a)
        for pipe, arts in sorted(by_pipe.items()):
            cfg = _experiment_config(opts, pipe)
            verdicts = assess(arts, seq, get_activity(aid), cfg)
            for (phase, char), v in sorted(verdicts.items()):
                n_rejected += not v.accepted
                w.writerow([name, aid, seq.label, pipe, phase, char, repr(float(v.statistic)),
                            repr(v.interval.lo), repr(v.interval.hi), int(v.accepted)])
            if len(characteristics(pipe)) > 1:
                for phase in (1, 2):
                    anyrej = any(not v.accepted for (p, _), v in verdicts.items() if p == phase)
                    w.writerow([name, aid, seq.label, pipe, phase, "any", "", "", "", int(not anyrej)])
    if opts.get("out"):
        write_atomic(Path(opts["out"]), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_experiment(args) -> int:
    opts = _settings(args)
    if opts.get("manifest"):
        samples = read_dataset(_existing(opts["manifest"], "--manifest"), _exclusions(opts))
    elif opts.get("synthetic"):
        try:
            samples = generate_dataset(int(opts["correct"]), int(opts["errors"]),
                                       _activities(opts.get("activity") or ["all"]),
                                       int(opts["seed"]), int(opts["frames"]),
                                       float(opts["noise"]), float(opts["magnitude"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError("give --manifest or --synthetic")
    correct = [s for s in samples if s.label == "correct"]
    errors = correct if opts.get("null") else [s for s in samples if s.label != "correct"]
    table = ResultTable()
    for pipe in opts["pipelines"]:
        if pipe not in PIPELINES:
            raise ConfigError(f"unknown pipeline {pipe!r}")
        log.info("running %s", pipe)
        table.extend(run_experiment(_experiment_config(opts, pipe), correct, errors))
    table = table.sorted()
    out = Path(opts["out"])
    write_atomic(out / "results.csv", table.to_csv())
    for name, text in table.table_files().items():
        write_atomic(out / name, text)
    write_atomic(out / "averages.txt", table.format_averages())
    sys.stdout.write(table.format_averages())
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, model_opts: bool = True) -> None:
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--seed", type=int)
    if model_opts:
        p.add_argument("--n-states", dest="n_states", type=int)
        p.add_argument("--topology", choices=("left_right", "ergodic"))
        p.add_argument("--k-sigma", dest="k_sigma", type=float)
        p.add_argument("--floor-plane", dest="floor_plane", type=float, nargs=4,
                       metavar=("A", "B", "C", "D"))
        p.add_argument("--once-per-repetition", dest="once_per_repetition",
                       action="store_const", const=True,
                       help="estimate plane normals once per repetition instead of per frame")
        p.add_argument("--raw-dtw", dest="raw_dtw", action="store_const", const=True,
                       help="do not divide DTW cost by the warping path length")
        p.add_argument("--exclude", help="file listing dataset paths to leave out, one per line")


def _synth_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--correct", type=int, help="correct repetitions per activity")
    p.add_argument("--errors", type=int, help="erroneous repetitions per error type")
    p.add_argument("--noise", type=float, help="angle noise std in degrees")
    p.add_argument("--magnitude", type=float, help="deviation magnitude in degrees")
    p.add_argument("--frames", type=int, help="nominal frames per repetition")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gesture-gate",
                                     description="Accept or reject exercise repetitions.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--activity", nargs="+", required=True,
                   help=f"activity ids or 'all' ({', '.join(ACTIVITIES)})")
    p.add_argument("--out", default="dataset")
    p.add_argument("--format", choices=("csv", "json"))
    _synth_opts(p)
    _common(p, model_opts=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="plane angles, symbols and normalized coordinates of one file")
    p.add_argument("--input", required=True)
    p.add_argument("--activity")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train templates or models with calibrated intervals")
    p.add_argument("--manifest", required=True)
    p.add_argument("--activity", nargs="+")
    p.add_argument("--pipeline", choices=PIPELINES)
    p.add_argument("--out", default="models")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="verdicts for test repetitions")
    p.add_argument("--models", required=True)
    p.add_argument("--manifest")
    p.add_argument("--input", nargs="+")
    p.add_argument("--activity")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="detection-rate tables for the four pipelines")
    p.add_argument("--manifest")
    p.add_argument("--synthetic", action="store_const", const=True,
                   help="generate the dataset in memory instead of reading one")
    p.add_argument("--activity", nargs="+")
    p.add_argument("--pipelines", nargs="+", choices=PIPELINES)
    p.add_argument("--null", action="store_const", const=True,
                   help="score the correct repetitions in place of the errors")
    p.add_argument("--out", default="results")
    _synth_opts(p)
    _common(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    func = args.func
    del args.func, args.command, args.verbose
    try:
        return func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GestureGateError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
