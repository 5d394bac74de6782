import math

import numpy as np
import pytest

from gesture_gate.errors import EmptyTraining, SequenceTooShort, SymbolOutOfRange
from gesture_gate.hmm import FLOOR_EPS, HmmModel, baum_welch, floored_rows, forward, init_model
from oracles import brute_force_likelihood


def random_model(rng, n, m, topology="ergodic"):
    a = rng.random((n, n)) + 0.05
    if topology == "left_right":
        a = np.triu(a)
    b = rng.random((n, m)) + 0.05
    pi = rng.random(n) + 0.05
    return HmmModel(a / a.sum(1, keepdims=True), b / b.sum(1, keepdims=True), pi / pi.sum())


def test_single_state_product():
    m = HmmModel([[1.0]], [[0.5, 0.5]], [1.0])
    ll = forward(m, [1, 2, 1])
    assert math.isclose(ll.total, math.log(0.125), rel_tol=1e-12)
    assert math.isclose(ll.per_symbol, math.log(0.5), rel_tol=1e-12)


def test_forced_path():
    m = HmmModel([[0, 1], [0, 1]], [[1, 0], [0, 1]], [1, 0])
    assert forward(m, [1, 2, 2]).total == 0.0


def test_impossible_sequence_scores_minus_infinity():
    m = HmmModel([[0, 1], [0, 1]], [[1, 0], [0, 1]], [1, 0])
    assert forward(m, [2, 2]).total == -math.inf


def test_forward_against_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(50):
        n, m, t = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 7)
        model = random_model(rng, n, m)
        obs = rng.integers(0, m, t)
        want = math.log(brute_force_likelihood(model.initial.tolist(), model.transition.tolist(),
                                                model.emission.tolist(), obs.tolist()))
        got = forward(model, obs + 1).total
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_symbol_out_of_range():
    m = HmmModel([[1.0]], [[0.5, 0.5]], [1.0])
    with pytest.raises(SymbolOutOfRange) as info:
        forward(m, [1, 3])
    assert info.value.t == 1


def test_long_sequence_does_not_underflow():
    m = HmmModel([[1.0]], [[0.1] * 10], [1.0])
    ll = forward(m, np.ones(5000, dtype=int))
    assert math.isclose(ll.per_symbol, math.log(0.1), rel_tol=1e-12)


def test_model_rejects_non_stochastic_rows():
    with pytest.raises(ValueError):
        HmmModel([[0.5, 0.4], [0, 1]], [[1.0], [1.0]], [1, 0])


def test_init_single_state():
    m = init_model(1, 18, "ergodic", seed=3)
    assert m.transition.tolist() == [[1.0]] and m.initial.tolist() == [1.0]
    assert np.allclose(m.emission, 1 / 18, rtol=0.25)


def test_init_is_deterministic_and_respects_topology():
    a, b = init_model(3, 5, "left_right", 9), init_model(3, 5, "left_right", 9)
    assert np.array_equal(a.transition, b.transition) and np.array_equal(a.emission, b.emission)
    assert np.all(np.tril(a.transition, -1) == 0)
    assert a.initial.tolist() == [1.0, 0.0, 0.0]


def test_init_perturbation_is_small():
    m = init_model(4, 6, "ergodic", 1)
    assert np.all(np.abs(m.emission * 6 - 1) <= 0.25)


def test_constant_sequence_single_state():
    m = baum_welch([[7] * 10], n_states=1, topology="ergodic", seed=0)
    assert m.transition.tolist() == [[1.0]] and m.initial.tolist() == [1.0]
    assert math.isclose(m.emission[0, 6], 1 - 17 * FLOOR_EPS, rel_tol=0, abs_tol=1e-15)
    assert np.allclose(np.delete(m.emission[0], 6), FLOOR_EPS, rtol=1e-12, atol=0)


def test_two_regimes_separate():
    seqs = [[1] * k + [18] * (12 - k) for k in (4, 5, 6, 7)]
    two = baum_welch(seqs, n_states=2, topology="left_right", seed=0)
    one = baum_welch(seqs, n_states=1, topology="left_right", seed=0)
    assert two.emission[0, 0] > 0.9 and two.emission[1, 17] > 0.9
    assert sum(forward(two, s).total for s in seqs) > sum(forward(one, s).total for s in seqs)


def test_training_errors():
    with pytest.raises(EmptyTraining):
        baum_welch([])
    with pytest.raises(SequenceTooShort) as info:
        baum_welch([[1, 2], [3]])
    assert info.value.index == 1
    with pytest.raises(SymbolOutOfRange):
        baum_welch([[1, 19]])


def test_em_monotone_and_stochastic():
    rng = np.random.default_rng(2)
    seqs = [rng.integers(1, 7, rng.integers(5, 25)) for _ in range(6)]
    seen = []

    def check(it, ll, model):
        for m in (model.transition, model.emission, model.initial[None, :]):
            assert np.all(np.abs(m.sum(axis=1) - 1) <= 1e-9)
        seen.append(ll)

    for topology in ("ergodic", "left_right"):
        seen.clear()
        baum_welch(seqs, 4, topology, seed=5, callback=check)
        assert len(seen) > 2
        assert all(b >= a - 1e-9 for a, b in zip(seen, seen[1:]))


def test_determinism():
    rng = np.random.default_rng(3)
    seqs = [rng.integers(1, 19, 20) for _ in range(5)]
    a, b = baum_welch(seqs, seed=4), baum_welch(seqs, seed=4)
    assert a.transition.tobytes() == b.transition.tobytes()
    assert a.emission.tobytes() == b.emission.tobytes()


def test_left_right_stays_left_right():
    rng = np.random.default_rng(4)
    m = baum_welch([rng.integers(1, 19, 30) for _ in range(4)], 5, "left_right", seed=1)
    i, j = np.indices(m.transition.shape)
    assert np.all(m.transition[(j < i) | (j > i + 2)] == 0)
    assert m.initial.tolist() == [1.0, 0, 0, 0, 0]


def test_every_allowed_entry_is_floored():
    m = baum_welch([[1, 1, 2, 2, 3, 3]] * 3, 3, "ergodic", seed=0)
    assert m.emission.min() >= FLOOR_EPS * (1 - 1e-12)
    assert m.transition.min() >= FLOOR_EPS * (1 - 1e-12)


def test_floored_rows_is_constrained_maximizer():
    counts = np.array([[10.0, 1e-12, 0.0, 5.0]])
    allowed = np.ones_like(counts, dtype=bool)
    p = floored_rows(counts, allowed, 1e-3)[0]
    assert math.isclose(p.sum(), 1.0, rel_tol=0, abs_tol=1e-15)
    assert p[1] == p[2] == 1e-3
    assert math.isclose(p[0] / p[3], 2.0, rel_tol=1e-12)


def test_save_and_load(tmp_path):
    m = baum_welch([[1, 2, 3, 3], [1, 2, 2, 3]], 2, seed=0)
    m.save(tmp_path / "m.json")
    back = HmmModel.load(tmp_path / "m.json")
    assert np.array_equal(back.emission, m.emission) and back.topology == m.topology
    assert back.trained_on["n_symbols_seen"] == [1, 2, 3]


def test_sequence_of_unseen_symbols_is_bounded():
    rng = np.random.default_rng(6)
    seqs = [rng.integers(3, 9, 25) for _ in range(10)]
    m = baum_welch(seqs, 5, seed=0)
    floor = min(forward(m, s).per_symbol for s in seqs)
    for u in (1, 2, 9, 18):
        for length in (1, 10, 40):
            score = forward(m, [u] * length).per_symbol
            assert score <= math.log(2 * FLOOR_EPS) < floor


def test_single_unseen_symbol_lowers_the_score():
    rng = np.random.default_rng(7)
    seqs = [rng.integers(3, 9, 25) for _ in range(10)]
    m = baum_welch(seqs, 5, seed=0)
    for s in seqs:
        base = forward(m, s).per_symbol
        x = s.copy()
        x[12] = 15
        # a floored emission costs on the order of -ln(eps) nats
        assert forward(m, x).total < forward(m, s).total - 10
        assert forward(m, x).per_symbol < base
