"""Differentially private exploration for linear-mixture and linear MDPs."""

from ._accel import BACKEND
from .errors import (
    BetaTooSmall,
    ConfigError,
    EmitError,
    InvalidBudget,
    NotPositiveDefinite,
    OutOfRange,
    PrivRLError,
    PureDpUnsupported,
    RunError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BetaTooSmall", "ConfigError", "EmitError", "InvalidBudget", "NotPositiveDefinite",
    "OutOfRange", "PrivRLError", "PureDpUnsupported", "RunError",
]
