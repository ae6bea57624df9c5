"""Exception hierarchy.

Every error carries a one-line machine-parseable ``summary`` used by the CLI
on the error stream.
"""


class PNSError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    @property
    def summary(self):
        parts = [f"{self.code}: {self.args[0]}"]
        parts += [f"{k}={v}" for k, v in sorted(self.details.items())]
        return " | ".join(parts)


class ShapeError(PNSError, ValueError):
    code = "shape-mismatch"


class GridMismatchError(PNSError, ValueError):
    code = "grid-mismatch"


class BlockRangeError(PNSError, ValueError):
    code = "block-out-of-range"


class UnsupportedNormError(PNSError, ValueError):
    code = "unsupported-norm"


class EmptyTrajectoryError(PNSError, ValueError):
    code = "empty-trajectory"


class WindowExceededError(PNSError, ValueError):
    code = "window-exceeded"


class GridTooSmallError(PNSError, ValueError):
    code = "grid-too-small"


class VacuumError(PNSError, ArithmeticError):
    code = "vacuum-breach"


class CFLError(PNSError, ArithmeticError):
    code = "cfl-violation"


class NonFiniteError(PNSError, ArithmeticError):
    code = "non-finite"


class InsufficientSamplesError(PNSError, ValueError):
    code = "too-few-samples"


class CertificateError(PNSError, ValueError):
    code = "uncertified-data"


class MissingProbeError(PNSError, KeyError):
    code = "missing-probe"


class ConfigError(PNSError, ValueError):
    """Aggregates every violation found while parsing a config."""

    code = "config-invalid"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations), count=len(self.violations))


class SimulationError(PNSError, RuntimeError):
    """Wraps a step failure with the time at which it happened."""

    code = "simulation-failed"

    def __init__(self, cause, t, branch=None):
        details = {"t": f"{t:.6g}", "cause": cause.code}
        if branch is not None:
            details["branch"] = branch
        super().__init__(str(cause.args[0]), **details)
        self.cause = cause
        self.t = t
        self.branch = branch
