"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class ShapeError(EngineError):
    """Operand shapes are inconsistent with the operation's contract."""


class NonFiniteError(EngineError):
    """A NaN or Inf reached a kernel boundary."""


class CacheStateError(EngineError):
    """A state-cache operation was called in an invalid lifecycle state."""


class FormatError(EngineError):
    """A config, weight, trace, or task file failed to parse or validate."""
