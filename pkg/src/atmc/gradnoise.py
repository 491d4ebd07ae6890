"""Synthetic gradient noise with known diagonal covariance.

Wrapping a target's exact gradient with Gaussian noise of configured
standard deviation makes the stochastic-gradient covariance exactly known
instead of estimated, so thermostat compensation can be tested directly.

Bookkeeping convention: a per-evaluation perturbation of standard
deviation ``sigma`` applied to gradients consumed once per step of size
``h`` corresponds to a continuous-time gradient-noise covariance (per unit
time) of ``B = sigma**2 * h``.  Configs specify ``sigma``; analyses that
need the continuous quantity derive it through :meth:`NoiseModel.implied_b`.
The stationary mean of the thermostat temperature is then B / (2 m).
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, require_finite


class NoiseKind(enum.IntEnum):
    NONE = 0
    GAUSSIAN_DIAG = 1


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind
    sigma: np.ndarray | float = 0.0  # per-evaluation std, scalar or per-component

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ConfigError(f"noise sigma must be finite and >= 0, got {self.sigma}")
        object.__setattr__(self, "sigma", sigma if sigma.ndim else float(sigma))

    @classmethod
    def none(cls):
        return cls(NoiseKind.NONE)

    @classmethod
    def gaussian(cls, sigma):
        return cls(NoiseKind.GAUSSIAN_DIAG, sigma)

    @classmethod
    def from_b(cls, b, h):
        """Noise whose per-unit-time covariance at step size h equals b."""
        b = np.asarray(b, dtype=np.float64)
        if np.any(b < 0):
            raise ConfigError(f"noise covariance must be >= 0, got {b}")
        sigma = np.sqrt(b / h)
        return cls(NoiseKind.GAUSSIAN_DIAG, sigma if sigma.ndim else float(sigma))

    def implied_b(self, h):
        """Continuous-time covariance B = sigma^2 h at step size h."""
        return np.square(self.sigma) * h

    @property
    def active(self):
        return self.kind == NoiseKind.GAUSSIAN_DIAG and np.any(np.asarray(self.sigma) > 0)

    def apply(self, clean, rng, eta=None):
        return noisy_gradient(self, clean, rng, eta)


def noisy_gradient(model: NoiseModel, clean, rng: np.random.Generator, eta=None) -> np.ndarray:
    """clean + sigma * eta with standard-normal eta; identity for NONE.

    The NONE model consumes no randomness; the Gaussian model always
    consumes one normal vector (even at sigma = 0) so streams stay aligned
    across configurations that only differ in sigma.
    """
    clean = np.asarray(clean, dtype=np.float64)
    require_finite(clean, "gradient")
    if model.kind == NoiseKind.NONE:
        return clean
    if eta is None:
        eta = rng.standard_normal(clean.shape)
    return clean + model.sigma * eta
