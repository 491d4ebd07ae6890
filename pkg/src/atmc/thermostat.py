"""Thermostat policies: temperature -> (noise amplitude, friction).

A policy maps the per-parameter temperature ``xi`` to the momentum-noise
amplitude ``alpha(xi)`` and the friction coefficient ``beta(xi)``, with the
structural identity ``beta = alpha + xi``.

* ``ATMC``      alpha = max(D - xi, 0), hence beta = max(D, xi) >= D: noise
                is withdrawn as the measured gradient noise grows, and the
                momentum always keeps at least friction D.
* ``NOSE_HOOVER`` alpha = D constant, beta = D + xi, which can turn the
                friction negative (momentum amplification) when xi < -D.
* ``NONE``      constants supplied by the caller (both zero by default).
                This is how SGLD/SGHMC share the same integrator: the
                sampler assembly pins alpha and beta instead of a
                temperature feedback law.

Pure functions over frozen specs; unrestricted concurrent use.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, require_finite


class PolicyKind(enum.IntEnum):
    ATMC = 0
    NOSE_HOOVER = 1
    NONE = 2


@dataclass(frozen=True)
class ThermostatPolicy:
    kind: PolicyKind
    momentum_noise: float = 0.0   # the noise level D (1/time); >= 0
    fixed_noise: float = 0.0      # NONE only: constant alpha
    fixed_friction: float = 0.0   # NONE only: constant beta

    def __post_init__(self):
        if not (self.momentum_noise >= 0 and math.isfinite(self.momentum_noise)):
            raise ConfigError(f"momentum noise level must be >= 0, got {self.momentum_noise}")
        if self.fixed_noise < 0:
            raise ConfigError(f"fixed noise amplitude must be >= 0, got {self.fixed_noise}")

    @classmethod
    def atmc(cls, momentum_noise):
        return cls(PolicyKind.ATMC, float(momentum_noise))

    @classmethod
    def nose_hoover(cls, momentum_noise):
        return cls(PolicyKind.NOSE_HOOVER, float(momentum_noise))

    @classmethod
    def none(cls):
        return cls(PolicyKind.NONE)

    @classmethod
    def fixed(cls, noise, friction):
        """Constant alpha/beta, bypassing any temperature feedback."""
        return cls(PolicyKind.NONE, 0.0, float(noise), float(friction))


def _as_temperature(xi):
    xi = np.asarray(xi, dtype=np.float64)
    require_finite(xi, "temperature")
    return xi


def alpha(policy: ThermostatPolicy, xi) -> np.ndarray:
    """Elementwise momentum-noise amplitude alpha(xi) >= 0."""
    xi = _as_temperature(xi)
    if policy.kind == PolicyKind.ATMC:
        return np.maximum(policy.momentum_noise - xi, 0.0)
    if policy.kind == PolicyKind.NOSE_HOOVER:
        return np.full_like(xi, policy.momentum_noise)
    return np.full_like(xi, policy.fixed_noise)


def beta(policy: ThermostatPolicy, xi) -> np.ndarray:
    """Elementwise friction coefficient beta(xi) = alpha(xi) + xi.

    The ATMC branch uses the algebraically identical max(D, xi) form,
    which avoids the cancellation in max(D - xi, 0) + xi.
    """
    xi = _as_temperature(xi)
    if policy.kind == PolicyKind.ATMC:
        return np.maximum(policy.momentum_noise, xi)
    if policy.kind == PolicyKind.NOSE_HOOVER:
        return policy.momentum_noise + xi
    return np.full_like(xi, policy.fixed_friction)
