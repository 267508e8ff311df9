"""Exception types raised by the spsqkd package.

Plain precondition violations (a probability outside [0, 1], a negative
power) raise ValueError.  The classes below mark conditions that are
semantically meaningful to callers: measured data that no physical state
can produce, decoy systems that cannot be inverted, and searches that
cannot bracket a solution.
"""

from __future__ import annotations


class QkdError(Exception):
    """Base class for spsqkd-specific errors."""


class InfeasibleObservablesError(QkdError):
    """Measured observables violate a feasibility bound (no valid state)."""


class InconsistentDataError(QkdError):
    """Observed rates are mutually inconsistent beyond numerical tolerance."""


class DegenerateDecoyError(QkdError):
    """Decoy and signal statistics are too similar to invert (singular system)."""


class NoKeyError(QkdError):
    """No positive key rate exists in the searched domain."""


class FitError(QkdError):
    """A least-squares fit failed to converge or its input is unusable."""


class ConfigError(QkdError):
    """A configuration file or CLI argument set is invalid."""
