import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gesture_gate.dtw import DtwTemplate
from gesture_gate.errors import InsufficientCalibration, MissingActivityData, TooShort
from gesture_gate.evaluator import (
    PIPELINES,
    AcceptanceInterval,
    Artifact,
    ExperimentConfig,
    assess,
    calibrate,
    evaluate_dtw,
    evaluate_hmm,
    extract_features,
    run_experiment,
    segment_phases,
    train,
    worker_count,
)
from gesture_gate.hmm import HmmModel
from gesture_gate.kinematics import AngleSequence
from gesture_gate.motion import get_activity
from gesture_gate.synth import MotionScript, generate, generate_dataset

ABDUCTION = get_activity("shoulder_abduction")


def track(primary):
    v = np.zeros((len(primary), 3))
    v[:, 2] = primary  # transverse is the abduction primary plane
    return AngleSequence(v)


def test_split_at_half_sine_peak():
    assert segment_phases(track(np.sin(np.pi * np.arange(30) / 30)), ABDUCTION).split_index == 15


def test_plateau_splits_at_first_frame():
    t = np.sin(np.pi * np.arange(30) / 30)
    t[14:17] = 2.0
    assert segment_phases(track(t), ABDUCTION).split_index == 14


def test_monotone_ramp_cannot_split():
    with pytest.raises(TooShort):
        segment_phases(track(np.arange(30.0)), ABDUCTION)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-90, 90), min_size=4, max_size=40))
def test_phases_reassemble(values):
    a = track(np.array(values))
    try:
        pair = segment_phases(a, ABDUCTION)
    except TooShort:
        return
    joined = np.concatenate([pair.phase1.values, pair.phase2.values[1:]])
    assert np.array_equal(joined, a.values)
    assert np.array_equal(pair.phase1.values[-1], pair.phase2.values[0])


def test_calibrate_examples():
    iv = calibrate([1, 2, 3], "dtw_distance")
    assert (iv.mean, iv.std, iv.lo, iv.hi) == (2, 1, 0, 4)
    iv = calibrate([5.5] * 4, "dtw_distance")
    assert iv.lo == iv.hi == 5.5
    iv = calibrate([0, 10], "dtw_distance", k_sigma=1)
    assert math.isclose(iv.std, math.sqrt(50), rel_tol=1e-15)
    assert math.isclose(iv.lo, -2.0710678118654755, rel_tol=1e-15)
    assert math.isclose(iv.hi, 12.071067811865476, rel_tol=1e-15)


def test_calibrate_errors():
    with pytest.raises(InsufficientCalibration):
        calibrate([1.0], "dtw_distance")
    with pytest.raises(InsufficientCalibration):
        calibrate([1.0, float("nan")], "dtw_distance")
    with pytest.raises(ValueError):
        calibrate([1.0, 2.0], "dtw_distance", k_sigma=0)


# rounded so the variance of near-equal values cannot underflow to zero
values = st.lists(st.floats(-1e3, 1e3).map(lambda x: round(x, 6)), min_size=2, max_size=60)


@settings(max_examples=200, deadline=None)
@given(values, st.floats(-1e3, 1e3))
def test_calibrate_shift_equivariant(xs, c):
    a = calibrate(xs, "dtw_distance")
    b = calibrate([x + c for x in xs], "dtw_distance")
    assert math.isclose(b.lo, a.lo + c, rel_tol=0, abs_tol=1e-9)
    assert math.isclose(b.hi, a.hi + c, rel_tol=0, abs_tol=1e-9)


@settings(max_examples=200, deadline=None)
@given(values)
def test_own_band_rejects_at_most_a_quarter(xs):
    iv = calibrate(xs, "dtw_distance")
    assert sum(not iv.contains(x) for x in xs) <= 0.25 * len(xs)


def template_of(series, lo, hi):
    return DtwTemplate(series, [0.0]), AcceptanceInterval(lo, hi, "dtw_distance", 0, 0)


def test_evaluate_dtw_examples():
    s = np.arange(9.0).reshape(3, 3)
    tpl, iv = template_of(s, 0, 4)
    v = evaluate_dtw(s, tpl, iv)
    assert v.accepted and v.statistic == 0
    assert not evaluate_dtw(s + [10, 0, 0], tpl, iv).accepted
    tpl, iv = template_of(s, 2, 4)
    assert not evaluate_dtw(s, tpl, iv).accepted


def test_kind_mismatch():
    s = np.zeros((3, 3))
    tpl, iv = template_of(s, 0, 1)
    model = HmmModel([[1.0]], [[0.5, 0.5]], [1.0])
    with pytest.raises(ValueError):
        evaluate_hmm([1, 2], model, iv)
    with pytest.raises(ValueError):
        evaluate_dtw(s, tpl, AcceptanceInterval(0, 1, "hmm_per_symbol_loglik", 0, 0))


def test_evaluate_hmm_zero_width_band():
    model = HmmModel([[1.0]], [[0.5, 0.5]], [1.0])
    iv = calibrate([math.log(0.5)] * 3, "hmm_per_symbol_loglik")
    assert evaluate_hmm([1, 2, 2], model, iv).accepted


def correct_features(aid, n, seed=0):
    d = get_activity(aid)
    data = generate_dataset(n, 2, [aid], seed=seed)
    return [extract_features(s.sequence, d) for s in data if s.label == "correct"], data


@pytest.mark.parametrize("pipeline", ["hmm_angles", "mddtw_angles"])
def test_calibration_set_mostly_accepted(pipeline):
    # per-symbol log-likelihoods have a long lower tail, so a 2 sigma band
    # can reject a little more than the Gaussian 5% of its own set
    feats, _ = correct_features("shoulder_abduction", 100)
    arts = train(feats, "shoulder_abduction", ExperimentConfig(pipeline))
    for art in arts:
        kept = sum(art.verdict(f.phase_values("angles", art.phase)).accepted for f in feats)
        assert kept >= 90


def test_floored_symbol_is_rejected():
    feats, _ = correct_features("hip_abduction", 42)
    arts = train(feats, "hip_abduction", ExperimentConfig("hmm_angles"))
    for art in arts:
        seen = set(art.model.trained_on["n_symbols_seen"])
        unseen = next(k for k in range(1, 19) if k not in seen)
        assert not evaluate_hmm([unseen] * 20, art.model, art.interval).accepted


def test_artifact_count_and_round_trip():
    feats, data = correct_features("elbow_flexion", 12)
    d = get_activity("elbow_flexion")
    expect = {"mddtw_coords": 2, "mddtw_angles": 2, "hmm_coords": 6, "hmm_angles": 6}
    test = next(s.sequence for s in data if s.label == "error1")
    for pipe in PIPELINES:
        cfg = ExperimentConfig(pipe)
        arts = train(feats, "elbow_flexion", cfg)
        assert len(arts) == expect[pipe]
        back = [Artifact.from_dict(a.to_dict()) for a in arts]
        assert assess(back, test, d, cfg) == assess(arts, test, d, cfg)


def test_training_needs_two_repetitions():
    feats, _ = correct_features("elbow_flexion", 2)
    with pytest.raises(InsufficientCalibration):
        train(feats[:1], "elbow_flexion", ExperimentConfig("mddtw_angles"))


def test_unsegmentable_repetition_is_rejected():
    feats, data = correct_features("shoulder_flexion", 10)
    d = get_activity("shoulder_flexion")
    cfg = ExperimentConfig("mddtw_angles")
    arts = train(feats, "shoulder_flexion", cfg)
    seq = next(s.sequence for s in data if s.label == "correct")
    half = seq.slice(0, len(seq) // 2 - 2)  # only the rising half
    out = assess(arts, half, d, cfg)
    assert all(not v.accepted and math.isnan(v.statistic) for v in out.values())


def test_experiment_rows_and_summaries():
    data = generate_dataset(14, 30, ["shoulder_abduction", "hip_flexion"], seed=5)
    correct = [s for s in data if s.label == "correct"]
    errors = [s for s in data if s.label != "correct"]
    table = run_experiment(ExperimentConfig("hmm_angles", workers=1), correct, errors)
    for aid in ("shoulder_abduction", "hip_flexion"):
        for phase in (1, 2):
            for err in ("error1", "error2"):
                cells = [table.rate(aid, phase, err, "hmm_angles", p)
                         for p in ("frontal", "sagittal", "transverse")]
                assert table.rate(aid, phase, err, "hmm_angles") == max(cells)
                assert table.rate(aid, phase, err, "hmm_angles", "any") >= max(cells)
                # a 30 degree deviation is plainly visible to the angle models
                assert max(cells) >= 80


def test_experiment_is_parallel_safe():
    data = generate_dataset(6, 3, ["elbow_flexion", "hip_abduction"], seed=6)
    correct = [s for s in data if s.label == "correct"]
    errors = [s for s in data if s.label != "correct"]
    one = run_experiment(ExperimentConfig("mddtw_coords", workers=1), correct, errors)
    two = run_experiment(ExperimentConfig("mddtw_coords", workers=2), correct, errors)
    assert one.to_csv() == two.to_csv()


def test_missing_errors_for_an_activity():
    data = generate_dataset(4, 2, ["elbow_flexion", "hip_abduction"], seed=1)
    correct = [s for s in data if s.label == "correct"]
    errors = [s for s in data if s.label != "correct" and s.activity_id == "elbow_flexion"]
    with pytest.raises(MissingActivityData):
        run_experiment(ExperimentConfig("mddtw_angles", workers=1), correct, errors)
    with pytest.raises(MissingActivityData):
        run_experiment(ExperimentConfig("mddtw_angles", workers=1), [], errors)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("hmm_words")
    with pytest.raises(ValueError):
        ExperimentConfig(k_sigma=0)
    with pytest.raises(ValueError):
        ExperimentConfig(topology="ring")


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("GESTURE_GATE_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.setenv("GESTURE_GATE_THREADS", "x")
    with pytest.raises(ValueError):
        worker_count()


def test_verdicts_are_deterministic():
    feats, data = correct_features("hip_extension", 8)
    d = get_activity("hip_extension")
    cfg = ExperimentConfig("hmm_coords")
    seq = generate(MotionScript("hip_extension", deviation="error2", seed=1))
    a = assess(train(feats, "hip_extension", cfg), seq, d, cfg)
    b = assess(train(feats, "hip_extension", cfg), seq, d, cfg)
    assert a == b
