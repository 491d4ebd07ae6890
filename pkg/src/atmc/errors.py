"""Exception types shared across the package."""

import numpy as np


class AtmcError(Exception):
    """Base class for all package errors."""


class ConfigError(AtmcError):
    """Invalid configuration; the message names the offending field."""


class InvalidStateError(AtmcError):
    """Sampler state became non-finite.

    Carries the global step index (when raised from a running chain) and
    the offending component index, so exploding runs can be located.
    """

    def __init__(self, message, *, step=None, component=None):
        super().__init__(message)
        self.step = step
        self.component = component


class DegenerateDirectionError(AtmcError):
    """A weight-normalized direction vector has zero norm."""


class EmptyEnsembleError(AtmcError):
    """A posterior-predictive ensemble needs at least one member."""


class InsufficientDataError(AtmcError):
    """Too few examples for the requested statistic."""


class NumericalError(AtmcError):
    """A linear-algebra routine failed (singular precision matrix, etc.)."""


def require_finite(values, label, step=None):
    """Raise :class:`InvalidStateError` naming the first non-finite component."""
    values = np.asarray(values)
    if np.all(np.isfinite(values)):
        return
    bad = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
    raise InvalidStateError(
        f"{label} has non-finite component at index {bad} "
        f"(value {values.ravel()[bad]!r})",
        step=step,
        component=bad,
    )
