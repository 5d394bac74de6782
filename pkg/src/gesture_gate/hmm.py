"""Discrete hidden Markov models: scaled forward scoring and Baum-Welch.

Observation symbols are 1-based (``1..n_symbols``) at the API boundary and
0-based inside the matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyTraining, NumericalError, SequenceTooShort, SymbolOutOfRange

TOPOLOGIES = ("ergodic", "left_right")
MAX_JUMP = 2
FLOOR_EPS = 1e-8
STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class LogLikelihood:
    total: float
    per_symbol: float


@dataclass(frozen=True, eq=False)
class HmmModel:
    transition: np.ndarray
    emission: np.ndarray
    initial: np.ndarray
    topology: str = "ergodic"
    floor_eps: float = FLOOR_EPS
    trained_on: dict = field(default_factory=dict)
    calibration: dict | None = None

    def __post_init__(self):
        a = np.array(self.transition, dtype=float)
        b = np.array(self.emission, dtype=float)
        pi = np.array(self.initial, dtype=float)
        n = pi.size
        if a.shape != (n, n) or b.ndim != 2 or b.shape[0] != n or pi.ndim != 1:
            raise ValueError(f"inconsistent shapes A{a.shape} B{b.shape} pi{pi.shape}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        for name, m in (("transition", a), ("emission", b), ("initial", pi[None, :])):
            if np.any(m < 0) or not np.all(np.isfinite(m)):
                raise ValueError(f"{name} has negative or non-finite entries")
            if np.any(np.abs(m.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
                raise ValueError(f"{name} rows must sum to 1")
        for m in (a, b, pi):
            m.setflags(write=False)
        object.__setattr__(self, "transition", a)
        object.__setattr__(self, "emission", b)
        object.__setattr__(self, "initial", pi)

    @property
    def n_states(self) -> int:
        return self.initial.size

    @property
    def n_symbols(self) -> int:
        return self.emission.shape[1]

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_symbols": self.n_symbols,
            "topology": self.topology,
            "A": self.transition.tolist(),
            "B": self.emission.tolist(),
            "pi": self.initial.tolist(),
            "floor_eps": self.floor_eps,
            "trained_on": self.trained_on,
            "calibration": self.calibration,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HmmModel":
        model = cls(doc["A"], doc["B"], doc["pi"], doc["topology"], doc["floor_eps"],
                    doc.get("trained_on") or {}, doc.get("calibration"))
        if (model.n_states, model.n_symbols) != (doc["n_states"], doc["n_symbols"]):
            raise ValueError("stored sizes disagree with the matrices")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "HmmModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def transition_mask(n_states: int, topology: str) -> np.ndarray:
    """Entries of the transition matrix the topology allows to be non-zero."""
    if topology == "ergodic":
        return np.ones((n_states, n_states), dtype=bool)
    if topology == "left_right":
        i, j = np.indices((n_states, n_states))
        return (j >= i) & (j <= i + MAX_JUMP)
    raise ValueError(f"unknown topology {topology!r}")


def initial_mask(n_states: int, topology: str) -> np.ndarray:
    if topology == "left_right":
        mask = np.zeros(n_states, dtype=bool)
        mask[0] = True
        return mask
    return np.ones(n_states, dtype=bool)


def init_model(n_states: int, n_symbols: int, topology: str = "left_right",
               seed: int = 0) -> HmmModel:
    """Near-uniform starting point: each allowed entry gets a relative
    perturbation of at most 10% before the rows are renormalized."""
    if n_states < 1 or n_symbols < 1:
        raise ValueError("n_states and n_symbols must be positive")
    rng = np.random.default_rng(seed)

    def rows(mask):
        m = np.where(mask, 1.0 + rng.uniform(-0.1, 0.1, mask.shape), 0.0)
        return m / m.sum(axis=1, keepdims=True)

    a = rows(transition_mask(n_states, topology))
    b = rows(np.ones((n_states, n_symbols), dtype=bool))
    pi = rows(initial_mask(n_states, topology)[None, :])[0]
    return HmmModel(a, b, pi, topology)


def _as_indices(obs, n_symbols: int) -> np.ndarray:
    sym = np.asarray(getattr(obs, "symbols", obs))
    if sym.ndim != 1 or sym.size == 0:
        raise ValueError("observation sequence must be non-empty and 1-D")
    bad = (sym < 1) | (sym > n_symbols) | (sym != np.round(sym))
    if bad.any():
        t = int(np.argmax(bad))
        raise SymbolOutOfRange(t, sym[t].item())
    return sym.astype(np.int64) - 1


def forward(model: HmmModel, obs) -> LogLikelihood:
    """Log-likelihood of one symbol sequence by the scaled forward recursion."""
    o = _as_indices(obs, model.n_symbols)
    a, b = model.transition, model.emission
    alpha = model.initial * b[:, o[0]]
    total = 0.0
    for t in range(o.size):
        if t:
            alpha = (alpha @ a) * b[:, o[t]]
        scale = alpha.sum()
        if scale <= 0.0:
            return LogLikelihood(-math.inf, -math.inf)
        total += math.log(scale)
        alpha = alpha / scale
    return LogLikelihood(total, total / o.size)


# ---------------------------------------------------------------------------
# training


@dataclass
class _Stats:
    loglik: float
    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray


class _Batch:
    """Training sequences padded to a common length, time on the first axis."""

    def __init__(self, seqs: list[np.ndarray], n_symbols: int):
        self.lengths = np.array([s.size for s in seqs])
        t_max = int(self.lengths.max())
        self.obs = np.zeros((t_max, len(seqs)), dtype=np.int64)
        for k, s in enumerate(seqs):
            self.obs[: s.size, k] = s
        self.mask = np.arange(t_max)[:, None] < self.lengths[None, :]
        self.onehot = np.zeros((t_max, len(seqs), n_symbols))
        np.put_along_axis(self.onehot, self.obs[:, :, None], 1.0, axis=2)
        self.onehot *= self.mask[:, :, None]


def _e_step(model: HmmModel, batch: _Batch) -> _Stats:
    a, pi = model.transition, model.initial
    em = model.emission.T[batch.obs]  # (T, S, N)
    mask = batch.mask
    t_max, n_seq = mask.shape
    n = pi.size
    alpha = np.empty((t_max, n_seq, n))
    scale = np.ones((t_max, n_seq))

    cur = pi[None, :] * em[0]
    scale[0] = cur.sum(axis=1)
    alpha[0] = cur / scale[0][:, None]
    for t in range(1, t_max):
        cur = (alpha[t - 1] @ a) * em[t]
        c = np.where(mask[t], cur.sum(axis=1), 1.0)
        cur = np.where(mask[t][:, None], cur, alpha[t - 1])
        scale[t] = c
        alpha[t] = cur / c[:, None]
    if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
        raise NumericalError("forward scaling factor vanished during training")

    beta = np.ones((t_max, n_seq, n))
    weighted = np.zeros((t_max, n_seq, n))
    for t in range(t_max - 2, -1, -1):
        nxt = em[t + 1] * beta[t + 1] / scale[t + 1][:, None]
        weighted[t + 1] = nxt
        beta[t] = np.where(mask[t + 1][:, None], nxt @ a.T, 1.0)

    gamma = alpha * beta * mask[:, :, None]
    live = mask[1:, :, None]
    xi = np.einsum("tsi,tsj->ij", alpha[:-1] * live, weighted[1:] * live) * a
    emis = np.einsum("tsn,tsm->nm", gamma, batch.onehot)
    loglik = float(np.sum(np.log(scale) * mask))
    return _Stats(loglik, gamma[0].sum(axis=0), xi, emis)


def floored_rows(counts: np.ndarray, allowed: np.ndarray, eps: float) -> np.ndarray:
    """Row-normalize ``counts`` subject to every allowed entry being >= eps.

    Entries whose share would fall below ``eps`` are pinned at ``eps`` and the
    remaining mass is split in proportion to the counts. This is the exact
    maximizer of the expected complete-data log-likelihood under the floor
    constraint, so EM stays monotone. Rows without counts become uniform over
    the allowed entries.
    """
    counts = np.atleast_2d(counts)
    allowed = np.atleast_2d(allowed)
    out = np.zeros_like(counts, dtype=float)
    for r in range(counts.shape[0]):
        idx = np.flatnonzero(allowed[r])
        if idx.size == 0:
            raise ValueError(f"row {r} allows no entries")
        if eps * idx.size > 1.0:
            raise ValueError("floor too large for the number of allowed entries")
        n = counts[r, idx]
        total = n.sum()
        if total <= 0:
            out[r, idx] = 1.0 / idx.size
            continue
        pinned = np.zeros(idx.size, dtype=bool)
        while True:
            free_mass = 1.0 - eps * pinned.sum()
            p = np.where(pinned, eps, n * (free_mass / n[~pinned].sum()))
            low = ~pinned & (p < eps)
            if not low.any():
                break
            pinned |= low
        out[r, idx] = p
    return out


def _m_step(model: HmmModel, stats: _Stats) -> HmmModel:
    eps = model.floor_eps
    n = model.n_states
    a = floored_rows(stats.transition, transition_mask(n, model.topology), eps)
    b = floored_rows(stats.emission, np.ones_like(stats.emission, dtype=bool), eps)
    pi = floored_rows(stats.initial[None, :], initial_mask(n, model.topology)[None, :], eps)[0]
    return HmmModel(a, b, pi, model.topology, eps)


def baum_welch(training: Sequence, n_states: int = 5, topology: str = "left_right",
               seed: int = 0, n_symbols: int = 18, max_iter: int = 300,
               tol: float = 1e-6, floor_eps: float = FLOOR_EPS,
               callback: Callable[[int, float, HmmModel], None] | None = None) -> HmmModel:
    """Fit a discrete HMM to several symbol sequences at once.

    Expected counts are summed over sequences before each re-estimation.
    Iteration stops when the relative gain in total log-likelihood drops
    below ``tol`` or after ``max_iter`` re-estimations. ``callback`` receives
    ``(iteration, total_loglik, model)`` after every E-step, where ``model`` is
    the parameter set that log-likelihood belongs to.
    """
    if not training:
        raise EmptyTraining("no training sequences")
    seqs = []
    for k, obs in enumerate(training):
        o = _as_indices(obs, n_symbols)
        if o.size < 2:
            raise SequenceTooShort(k)
        seqs.append(o)
    batch = _Batch(seqs, n_symbols)
    start = init_model(n_states, n_symbols, topology, seed)
    model = HmmModel(start.transition, start.emission, start.initial, topology, floor_eps)
    prev = None
    history = []
    for it in range(max_iter + 1):
        stats = _e_step(model, batch)
        history.append(stats.loglik)
        if callback is not None:
            callback(it, stats.loglik, model)
        if prev is not None and stats.loglik - prev < tol * abs(prev):
            break
        if it == max_iter:
            break
        prev = stats.loglik
        model = _m_step(model, stats)
    meta = {
        "n_sequences": len(seqs),
        "n_symbols_seen": sorted({int(s) + 1 for o in seqs for s in np.unique(o)}),
        "seed": seed,
        "iterations": len(history) - 1,
        "loglik_history": history,
    }
    return HmmModel(model.transition, model.emission, model.initial, topology, floor_eps, meta)
