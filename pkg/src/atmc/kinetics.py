"""Momentum energy functions and the quantities derived from them.

Two momentum distributions are supported.  The Gaussian has constant mass
``m`` and velocity ``p / m``.  The symmetric hyperbolic distribution has a
momentum-dependent mass, which makes the velocity saturate at a speed cap
``c``: parameter updates per unit time are bounded by ``c`` no matter how
large the gradient-driven momentum grows (relativistic dynamics).  The
Gaussian is the exact ``c -> infinity`` limit of the hyperbolic family and
is represented by its own variant rather than a sentinel float, so no
infinities flow through the arithmetic.

All operations act elementwise on momentum vectors and are pure functions
of immutable specs; they are safe to call concurrently.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, require_finite


class KineticsKind(enum.IntEnum):
    GAUSSIAN = 0
    HYPERBOLIC = 1


@dataclass(frozen=True)
class KineticsSpec:
    """Momentum distribution choice plus its hyperparameters.

    ``mass`` is the preconditioner m (> 0).  ``speed_cap`` is the bound c
    on |velocity| and is finite and positive for the hyperbolic variant,
    ``None`` for the Gaussian one.
    """

    kind: KineticsKind
    mass: float
    speed_cap: float | None = None

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ConfigError(f"kinetics mass must be positive and finite, got {self.mass}")
        if self.kind == KineticsKind.HYPERBOLIC:
            if self.speed_cap is None or not (0 < self.speed_cap < math.inf):
                raise ConfigError(
                    f"hyperbolic kinetics needs a finite positive speed cap, got {self.speed_cap}"
                )
        elif self.speed_cap is not None:
            raise ConfigError("gaussian kinetics takes no speed cap; it is the c -> inf limit")

    @classmethod
    def gaussian(cls, mass):
        return cls(KineticsKind.GAUSSIAN, float(mass))

    @classmethod
    def hyperbolic(cls, mass, speed_cap):
        return cls(KineticsKind.HYPERBOLIC, float(mass), float(speed_cap))


def _as_momentum(p):
    p = np.asarray(p, dtype=np.float64)
    require_finite(p, "momentum")
    return p


def kinetic_energy(spec: KineticsSpec, p) -> float:
    """Total momentum energy K(p); non-negative, zero at p = 0, even in p.

    The hyperbolic branch evaluates m c^2 (sqrt(1 + u^2) - 1) with
    u = p / (m c) in the cancellation-free form m c^2 u^2 / (sqrt(1+u^2)+1)
    so small momenta (where the Gaussian limit is tested) stay accurate.
    """
    p = _as_momentum(p)
    m = spec.mass
    if spec.kind == KineticsKind.GAUSSIAN:
        return float(np.dot(p, p) / (2.0 * m))
    c = spec.speed_cap
    u = p / (m * c)
    u2 = u * u
    return float(m * c * c * np.sum(u2 / (np.sqrt(1.0 + u2) + 1.0)))


def mass(spec: KineticsSpec, p) -> np.ndarray:
    """Elementwise position-dependent mass M(p) >= m (constant m for Gaussian)."""
    p = _as_momentum(p)
    m = spec.mass
    if spec.kind == KineticsKind.GAUSSIAN:
        return np.full_like(p, m)
    # hypot keeps sqrt(1 + u^2) overflow-free for huge momenta
    return m * np.hypot(1.0, p / (m * spec.speed_cap))


def velocity(spec: KineticsSpec, p) -> np.ndarray:
    """Parameter velocity dK/dp = p / M(p), elementwise; odd in p.

    For the hyperbolic variant the magnitude never exceeds the speed cap:
    mathematically |v| < c strictly, and the final clip removes the one-ulp
    overshoot division rounding can otherwise produce in the saturated
    regime (|p| beyond ~1e8 m c).
    """
    p = _as_momentum(p)
    if spec.kind == KineticsKind.GAUSSIAN:
        return p / spec.mass
    c = spec.speed_cap
    v = p / (spec.mass * np.hypot(1.0, p / (spec.mass * c)))
    return np.clip(v, -c, c)
