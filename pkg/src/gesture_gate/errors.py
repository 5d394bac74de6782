"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`GestureGateError`. The CLI maps :class:`DataError` to exit code 3 and
:class:`NumericalError` to exit code 4.
"""


class GestureGateError(Exception):
    """Base class for package errors."""


class DataError(GestureGateError):
    """Input data violates a precondition."""


class NumericalError(GestureGateError):
    """A computation produced a non-finite or otherwise unusable value."""


class ParseError(DataError):
    pass


class MissingJoint(DataError):
    def __init__(self, frame_index, joint):
        super().__init__(f"frame {frame_index} lacks joint {joint!r}")
        self.frame_index = frame_index
        self.joint = joint


class NonMonotonicTimestamp(DataError):
    def __init__(self, frame_index):
        super().__init__(f"timestamp of frame {frame_index} does not increase")
        self.frame_index = frame_index


class DegenerateReference(DataError):
    def __init__(self, frame_index):
        super().__init__(f"reference joints coincide in frame {frame_index}")
        self.frame_index = frame_index


class CollinearShoulders(DataError):
    def __init__(self, frame_index=None):
        where = "" if frame_index is None else f" in frame {frame_index}"
        super().__init__(f"shoulder joints are collinear{where}; frontal plane undefined")
        self.frame_index = frame_index


class ZeroVector(DataError):
    def __init__(self, frame_index=None):
        where = "" if frame_index is None else f" in frame {frame_index}"
        super().__init__(f"zero-length vector{where}")
        self.frame_index = frame_index


class OutOfRange(DataError):
    def __init__(self, value, frame_index=None):
        where = "" if frame_index is None else f" at frame {frame_index}"
        super().__init__(f"angle {value!r}{where} outside [-90, 90]")
        self.value = value
        self.frame_index = frame_index


class DimensionMismatch(DataError):
    pass


class EmptySeries(DataError):
    pass


class InsufficientTraining(DataError):
    pass


class EmptyTraining(InsufficientTraining):
    pass


class SequenceTooShort(DataError):
    def __init__(self, index):
        super().__init__(f"training sequence {index} has fewer than 2 symbols")
        self.index = index


class SymbolOutOfRange(DataError):
    def __init__(self, t, symbol=None):
        super().__init__(f"symbol {symbol!r} at position {t} outside the model alphabet")
        self.t = t
        self.symbol = symbol


class TooShort(DataError):
    pass


class InsufficientCalibration(DataError):
    pass


class MissingActivityData(DataError):
    pass
