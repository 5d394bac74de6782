"""Ten-degree quantization of plane angles into 18 symbols.

Bins are half-open below, ``[lo, lo + 10)``, except the top bin ``[80, 90]``
which is closed, so every angle in ``[-90, 90]`` has exactly one symbol.
Symbols are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange

N_SYMBOLS = 18
BIN_WIDTH = 10.0


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    symbols: np.ndarray
    plane: str = ""

    def __post_init__(self):
        s = np.asarray(self.symbols)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("a symbol sequence must be a non-empty 1-D array")
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise ValueError("symbols must be integers")
            s = s.astype(np.int64)
        if s.min() < 1 or s.max() > N_SYMBOLS:
            raise ValueError(f"symbols must lie in [1, {N_SYMBOLS}]")
        s = s.astype(np.int64, copy=True)
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    def __len__(self) -> int:
        return self.symbols.size

    def tolist(self) -> list[int]:
        return self.symbols.tolist()


def _symbols(angles: np.ndarray) -> np.ndarray:
    return np.minimum(N_SYMBOLS, np.floor((angles + 90.0) / BIN_WIDTH).astype(np.int64) + 1)


def quantize(angle: float) -> int:
    if not -90.0 <= angle <= 90.0:
        raise OutOfRange(angle)
    return int(_symbols(np.float64(angle)))


def quantize_sequence(angles, plane: str = "") -> SymbolSequence:
    """Quantize one angle track.

    ``angles`` is either a 1-D array of degrees or an
    :class:`~gesture_gate.kinematics.AngleSequence`, in which case ``plane``
    selects the track.
    """
    if hasattr(angles, "track"):
        values = angles.track(plane)
    else:
        values = np.asarray(angles, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("cannot quantize an empty track")
    bad = ~((values >= -90.0) & (values <= 90.0))
    if bad.any():
        t = int(np.argmax(bad))
        raise OutOfRange(float(values[t]), t)
    return SymbolSequence(_symbols(values), plane)


@dataclass(frozen=True)
class AffineMap:
    """Maps a scalar track onto the angle range so it can share the alphabet.

    The calibration range ``[lo, hi]`` lands on ``[-75, 75]`` (symbols 2 to 17).
    Values well outside it clip into the outermost bins, which no calibration
    value reaches.
    """

    lo: float
    hi: float
    span: float = 75.0

    @classmethod
    def fit(cls, values) -> "AffineMap":
        values = np.concatenate([np.ravel(v) for v in values])
        lo, hi = float(values.min()), float(values.max())
        if hi - lo <= 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        return cls(lo, hi)

    def __call__(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        mid = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        return np.clip((values - mid) / half * self.span, -90.0, 90.0)
