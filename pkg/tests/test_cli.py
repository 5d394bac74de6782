import csv
import json
import subprocess
import sys

import pytest

from gesture_gate.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert run("synth", "--activity", "shoulder_abduction", "--correct", 8, "--errors", 4,
               "--seed", 7, "--out", out) == 0
    return out / "manifest.json"


def test_synth_needs_activity(capsys):
    with pytest.raises(SystemExit) as info:
        run("synth")
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_activity_is_a_usage_error(tmp_path):
    assert run("synth", "--activity", "juggling", "--out", tmp_path) == 2


def test_synth_rerun_gives_same_hash(dataset, tmp_path):
    assert run("synth", "--activity", "shoulder_abduction", "--correct", 8, "--errors", 4,
               "--seed", 7, "--out", tmp_path) == 0
    first = json.loads(dataset.read_text())
    again = json.loads((tmp_path / "manifest.json").read_text())
    assert first["hash"] == again["hash"]
    assert len(first["files"]) == 16


@pytest.mark.parametrize("pipeline,count", [("hmm_angles", 6), ("mddtw_coords", 2)])
def test_train_writes_artifacts(dataset, tmp_path, pipeline, count):
    assert run("train", "--manifest", dataset, "--pipeline", pipeline, "--out", tmp_path) == 0
    files = sorted(tmp_path.glob("*.json"))
    assert len(files) == count
    doc = json.loads(files[0].read_text())
    assert {"lo", "hi", "mean", "std"} <= set(doc["interval"])


def test_train_with_one_correct_repetition(dataset, tmp_path):
    doc = json.loads(dataset.read_text())
    correct = [f["path"] for f in doc["files"] if f["label"] == "correct"]
    exclude = tmp_path / "exclude.txt"
    exclude.write_text("\n".join(correct[1:]) + "\n")
    assert run("train", "--manifest", dataset, "--exclude", exclude, "--out", tmp_path / "m") == 3


def test_evaluate_rows(dataset, tmp_path):
    models = tmp_path / "models"
    assert run("train", "--manifest", dataset, "--pipeline", "hmm_angles", "--out", models) == 0
    assert run("train", "--manifest", dataset, "--pipeline", "mddtw_angles", "--out", models) == 0
    out = tmp_path / "verdicts.csv"
    assert run("evaluate", "--models", models, "--manifest", dataset, "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    # per file: 2 DTW phases, 6 HMM characteristics and 2 combined HMM rows
    assert len(rows) == 16 * 10
    bad = [r for r in rows if r["label"] != "correct" and r["pipeline"] == "hmm_angles"
           and r["characteristic"] == "any"]
    assert all(r["accepted"] == "0" for r in bad)


def test_evaluate_single_file(dataset, tmp_path):
    models = tmp_path / "models"
    run("train", "--manifest", dataset, "--pipeline", "mddtw_coords", "--out", models)
    one = sorted(dataset.parent.glob("*_error1_*.csv"))[0]
    out = tmp_path / "v.csv"
    assert run("evaluate", "--models", models, "--input", one, "--activity",
               "shoulder_abduction", "--out", out) == 0
    assert len(list(csv.DictReader(out.open()))) == 2


def test_evaluate_without_models(tmp_path):
    assert run("evaluate", "--models", tmp_path / "nowhere", "--input", "x.csv") == 2
    assert run("evaluate", "--models", tmp_path, "--input", "x.csv") == 3


def test_extract(dataset, tmp_path):
    src = sorted(dataset.parent.glob("*_correct_*.csv"))[0]
    out = tmp_path / "features.csv"
    assert run("extract", "--input", src, "--activity", "shoulder_abduction", "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["phase"] == "1" and rows[-1]["phase"] == "2"
    assert all(1 <= int(r["symbol_transverse"]) <= 18 for r in rows)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"correct": 3, "errors": 2, "seed": 1}))
    assert run("synth", "--activity", "hip_flexion", "--config", cfg, "--errors", 3,
               "--out", tmp_path / "d") == 0
    labels = [f["label"] for f in json.loads((tmp_path / "d" / "manifest.json").read_text())["files"]]
    assert labels.count("correct") == 3 and labels.count("error1") == 3


def test_broken_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2")
    assert run("synth", "--activity", "hip_flexion", "--config", cfg, "--out", tmp_path) == 2


def test_experiment_outputs(dataset, tmp_path):
    out = tmp_path / "res"
    assert run("experiment", "--manifest", dataset, "--out", out) == 0
    names = sorted(p.name for p in out.iterdir())
    tables = [n for n in names if n.startswith("table_")]
    assert len(tables) == 6
    assert {"results.csv", "averages.txt"} <= set(names)


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "gesture_gate", "--version"],
                          capture_output=True, text=True)
    assert done.returncode == 0 and done.stdout.strip()
