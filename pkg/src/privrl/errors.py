"""Exception types raised across the package."""


class PrivRLError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(PrivRLError, ValueError):
    """Cholesky factorization failed; the matrix is not positive definite."""


class InvalidBudget(PrivRLError, ValueError):
    """A privacy budget is outside the range a calibration accepts."""


class PureDpUnsupported(PrivRLError, ValueError):
    """The requested operation only yields approximate DP (delta > 0)."""


class OutOfRange(PrivRLError, IndexError):
    """An index (for example a tree prefix length) is outside its domain."""


class BetaTooSmall(PrivRLError, ValueError):
    """A confidence width violates the required lower bound."""


class ConfigError(PrivRLError, ValueError):
    """An experiment configuration is malformed."""


class RunError(PrivRLError, RuntimeError):
    """An agent failed inside a run; the message names the run."""


class EmitError(PrivRLError, ValueError):
    """Records could not be written (nothing to write, or an IO failure)."""
