"""Multi-dimensional dynamic time warping and template selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptySeries, InsufficientTraining


def as_series(x) -> np.ndarray:
    """Validate a vector series and return it as a ``(T, d)`` float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a (T, d) series, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptySeries("series has no elements")
    if not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    return arr


def local_costs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1))


def accumulate(cost: np.ndarray) -> tuple[float, int]:
    """Minimum accumulated cost over monotone paths from (0, 0) to the far
    corner using unit steps (1,0), (0,1), (1,1), and the length of that path.

    Ties in cost go to the shorter path, so the result does not depend on the
    argument order.
    """
    n, m = cost.shape
    rows = cost.tolist()
    inf = float("inf")
    prev_c = [inf] * m
    prev_l = [0] * m
    for i in range(n):
        row = rows[i]
        cur_c = [0.0] * m
        cur_l = [0] * m
        for j in range(m):
            if i == 0 and j == 0:
                bc, bl = 0.0, 0
            else:
                bc, bl = inf, 0
                if i > 0 and j > 0:
                    bc, bl = prev_c[j - 1], prev_l[j - 1]
                if i > 0:
                    c, l = prev_c[j], prev_l[j]
                    if c < bc or (c == bc and l < bl):
                        bc, bl = c, l
                if j > 0:
                    c, l = cur_c[j - 1], cur_l[j - 1]
                    if c < bc or (c == bc and l < bl):
                        bc, bl = c, l
            cur_c[j] = bc + row[j]
            cur_l[j] = bl + 1
        prev_c, prev_l = cur_c, cur_l
    return prev_c[-1], prev_l[-1]


def mddtw_distance(x, y, normalize: bool = True) -> float:
    """DTW distance between two vector series with Euclidean local cost.

    By default the accumulated cost is divided by the number of steps on the
    optimal path; ``normalize=False`` returns the raw accumulated cost.
    """
    x, y = as_series(x), as_series(y)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    total, length = accumulate(local_costs(x, y))
    return total / length if normalize else total


@dataclass(frozen=True, eq=False)
class DtwTemplate:
    series: np.ndarray
    training_distances: np.ndarray
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "series", as_series(self.series))
        object.__setattr__(self, "training_distances",
                           np.asarray(self.training_distances, dtype=float))


def distance_matrix(series: Sequence[np.ndarray], normalize: bool = True) -> np.ndarray:
    k = len(series)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = mddtw_distance(series[i], series[j], normalize)
    return out


def select_template(training: Sequence, normalize: bool = True) -> DtwTemplate:
    """Pick the training series with the smallest summed distance to all the
    others (lowest index on ties)."""
    if len(training) < 2:
        raise InsufficientTraining(f"need at least 2 training series, got {len(training)}")
    series = [as_series(s) for s in training]
    dims = {s.shape[1] for s in series}
    if len(dims) != 1:
        raise DimensionMismatch(f"training series have mixed dimensions {sorted(dims)}")
    dist = distance_matrix(series, normalize)
    best = int(np.argmin([math.fsum(row) for row in dist]))
    return DtwTemplate(series[best], dist[best].copy(), best)
