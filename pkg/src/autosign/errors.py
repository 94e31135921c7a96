"""Exception hierarchy shared by every module."""


class AutosignError(Exception):
    pass


class ShapeError(AutosignError, ValueError):
    """Operand extents do not agree."""


class RankError(AutosignError, ValueError):
    pass


class SequenceTooShortError(AutosignError, ValueError):
    pass


class EmptyTargetError(AutosignError, ValueError):
    pass


class ConfigError(AutosignError, ValueError):
    pass


class CapacityError(AutosignError, ValueError):
    pass


class DataError(AutosignError):
    """Base for anything wrong with input data or files (CLI exit code 2)."""


class FormatError(DataError):
    pass


class CorruptionError(DataError):
    pass


class EmptyPoseError(DataError, ValueError):
    pass


class BatchError(DataError, ValueError):
    pass


class UndefinedWERError(AutosignError, ValueError):
    pass


class GuardError(AutosignError, ValueError):
    pass


class DivergenceError(AutosignError, FloatingPointError):
    pass
