"""Exception types. Bad arguments raise plain ``ValueError``."""


class CsdpError(Exception):
    pass


class ProtocolViolation(CsdpError):
    """A shuffler slot was driven out of its activate/submit/execute lifecycle."""


class CapacityExceeded(ProtocolViolation):
    """A schedule needs more concurrently active shufflers than exist."""


class MalformedTranscript(CsdpError, ValueError):
    pass


class EstimatorUndefined(CsdpError, ValueError):
    """Decoding is impossible, e.g. a blanket rate of 1 leaves no signal."""


class FitUndefined(CsdpError, ValueError):
    pass


class NumericalFailure(CsdpError, ArithmeticError):
    pass


class ConfigError(CsdpError, ValueError):
    pass
