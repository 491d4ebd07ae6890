"""Split-operator integrator for thermostatted momentum dynamics.

The continuous dynamics are split into two exactly solvable parts:

* operator A - drift of the parameters and temperatures at frozen momentum:
  ``theta += h * velocity(p)`` and ``xi += h * (p * velocity(p) - 1)``.
  This is a linear flow and is reversible (apply with ``-h`` to undo).
* operator B - the momentum update.  With the friction ``beta`` and noise
  amplitude ``alpha`` frozen at the entry temperature (they cannot change
  during B, which leaves ``xi`` untouched) and the mass frozen at the entry
  momentum, B is a constant-coefficient Ornstein-Uhlenbeck process
  ``dp = (-g - beta p) dt + sqrt(2 alpha m) dW`` whose Gaussian transition
  is sampled exactly:

      p' = exp(-beta h) p - gamma_1 g + sqrt(m alpha gamma_2) eta,
      gamma_a = (1 - exp(-a beta h)) / beta.

The symmetric composition B(h/2) A(h) B(h/2) (``strang_step``) is a weak
second-order scheme.  Chains iterate the fused form B(h) A(h)
(``fused_step``), which costs one gradient evaluation per step; iterating
it differs from iterated Strang steps only by a boundary half-update of
the momentum, which does not affect the stationary distribution of the
parameters.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidStateError, require_finite
from .kinetics import KineticsSpec, mass, velocity
from .thermostat import ThermostatPolicy, alpha as policy_alpha, beta as policy_beta

# Below this |beta * h| the closed form (1 - exp(-a beta h)) / beta is
# replaced by its two-term series; expm1 loses nothing above it.
OU_SERIES_THRESHOLD = 1e-8


@dataclass
class SamplerState:
    """Per-chain state: parameters, momenta, temperatures, and the clock.

    The three vectors always have equal length; the clock ``t`` counts
    accumulated integration time and never decreases across steps.
    """

    theta: np.ndarray
    p: np.ndarray
    xi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        self.xi = np.asarray(self.xi, dtype=np.float64)
        if not (self.theta.shape == self.p.shape == self.xi.shape):
            raise ConfigError(
                f"state vectors must share one shape, got {self.theta.shape}, "
                f"{self.p.shape}, {self.xi.shape}"
            )

    @classmethod
    def initial(cls, theta, p=None, xi=None):
        """State with zero momentum and temperature unless overridden."""
        theta = np.asarray(theta, dtype=np.float64)
        p = np.zeros_like(theta) if p is None else np.asarray(p, dtype=np.float64)
        xi = np.zeros_like(theta) if xi is None else np.asarray(xi, dtype=np.float64)
        return cls(theta, p, xi, 0.0)

    def validate(self, step=None):
        require_finite(self.theta, "theta", step)
        require_finite(self.p, "momentum", step)
        require_finite(self.xi, "temperature", step)

    def copy(self):
        return SamplerState(self.theta.copy(), self.p.copy(), self.xi.copy(), self.t)


class ScheduleKind(enum.IntEnum):
    CONSTANT = 0
    CYCLIC = 1


@dataclass(frozen=True)
class StepSizeSchedule:
    """Constant step size, or a cosine cycle h0 * (1 + cos(pi k/n)) / 2.

    The cyclic form restarts at ``h0`` every ``cycle_length`` steps and
    decays towards zero at the end of each cycle; chains collect a
    posterior sample at the small-step end of every cycle.
    """

    kind: ScheduleKind
    base: float
    cycle_length: int = 0

    def __post_init__(self):
        if not (self.base > 0 and math.isfinite(self.base)):
            raise ConfigError(f"base step size must be positive and finite, got {self.base}")
        if self.kind == ScheduleKind.CYCLIC and self.cycle_length <= 0:
            raise ConfigError(f"cycle length must be a positive integer, got {self.cycle_length}")

    @classmethod
    def constant(cls, h0):
        return cls(ScheduleKind.CONSTANT, float(h0))

    @classmethod
    def cyclic(cls, h0, cycle_length):
        return cls(ScheduleKind.CYCLIC, float(h0), int(cycle_length))


def step_size(schedule: StepSizeSchedule, step_index: int) -> float:
    """Step size for one 0-based step index."""
    if step_index < 0:
        raise ConfigError(f"step index must be >= 0, got {step_index}")
    if schedule.kind == ScheduleKind.CONSTANT:
        return schedule.base
    n = schedule.cycle_length
    phase = (step_index % n) / n
    return schedule.base * 0.5 * (1.0 + math.cos(math.pi * phase))


def step_sizes(schedule: StepSizeSchedule, start: int, count: int) -> np.ndarray:
    """Vector of step sizes for steps start .. start+count-1."""
    idx = np.arange(start, start + count, dtype=np.float64)
    if schedule.kind == ScheduleKind.CONSTANT:
        return np.full(count, schedule.base)
    n = schedule.cycle_length
    phase = np.mod(idx, n) / n
    return schedule.base * 0.5 * (1.0 + np.cos(np.pi * phase))


def ou_coefficient(a: int, beta, h: float):
    """Decay-weighted duration gamma_a = (1 - exp(-a beta h)) / beta.

    Valid for friction of either sign; the beta -> 0 limit is a*h.  Scalar
    or vector ``beta`` accepted.
    """
    if a not in (1, 2):
        raise ConfigError(f"OU coefficient order must be 1 or 2, got {a}")
    beta_arr = np.asarray(beta, dtype=np.float64)
    x = beta_arr * h
    small = np.abs(x) < OU_SERIES_THRESHOLD
    safe = np.where(small, 1.0, beta_arr)
    exact = -np.expm1(-a * x) / safe
    series = a * h * (1.0 - 0.5 * a * x)
    out = np.where(small, series, exact)
    return float(out) if np.isscalar(beta) else out


def operator_a(state: SamplerState, h: float, kin: KineticsSpec) -> SamplerState:
    """Exact parameter/temperature drift over duration h; momentum untouched.

    Reversible: applying with ``-h`` recovers the input state.
    """
    v = velocity(kin, state.p)
    theta = state.theta + h * v
    xi = state.xi + h * (state.p * v - 1.0)
    return SamplerState(theta, state.p.copy(), xi, state.t)


def operator_b(
    state: SamplerState,
    h: float,
    grad,
    policy: ThermostatPolicy,
    kin: KineticsSpec,
    rng: np.random.Generator,
    eta=None,
) -> SamplerState:
    """Exact Ornstein-Uhlenbeck momentum transition over duration h.

    ``grad`` is the (possibly minibatch) loss gradient at the current
    parameters.  Friction/noise are evaluated at the entry temperature and
    the mass at the entry momentum, both constant during the substep.
    One standard-normal vector is always consumed (from ``eta`` if given,
    else drawn from ``rng``), so random streams advance identically
    whether or not the noise amplitude happens to be zero.
    """
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != state.p.shape:
        raise ConfigError(f"gradient shape {g.shape} != momentum shape {state.p.shape}")
    a_vec = policy_alpha(policy, state.xi)
    b_vec = policy_beta(policy, state.xi)
    m_vec = mass(kin, state.p)
    decay = np.exp(-b_vec * h)
    g1 = ou_coefficient(1, b_vec, h)
    g2 = ou_coefficient(2, b_vec, h)
    if eta is None:
        eta = rng.standard_normal(state.p.shape)
    p_new = decay * state.p - g1 * g + np.sqrt(m_vec * a_vec * g2) * eta
    if not np.all(np.isfinite(p_new)):
        bad = int(np.flatnonzero(~np.isfinite(p_new))[0])
        raise InvalidStateError(
            f"momentum became non-finite at component {bad} "
            f"(beta={b_vec.ravel()[bad]:.6g}, max|grad|={np.max(np.abs(g)):.6g})",
            component=bad,
        )
    return SamplerState(state.theta.copy(), p_new, state.xi.copy(), state.t)


def _as_gradient_fn(target):
    """Accept a Target-like object or a bare callable theta -> gradient."""
    if callable(target) and not hasattr(target, "full_gradient"):
        return target
    return target.full_gradient


def strang_step(state, h, target, policy, kin, rng, noise=None) -> SamplerState:
    """One symmetric step B(h/2) A(h) B(h/2); weak second order.

    Each momentum substep evaluates a fresh gradient at the current
    parameters; ``noise`` optionally perturbs those gradients.  Advances
    the clock by h.
    """
    grad_fn = _as_gradient_fn(target)

    def noisy(theta):
        g = grad_fn(theta)
        return g if noise is None else noise.apply(g, rng)

    s = operator_b(state, 0.5 * h, noisy(state.theta), policy, kin, rng)
    s = operator_a(s, h, kin)
    s = operator_b(s, 0.5 * h, noisy(s.theta), policy, kin, rng)
    s.t = state.t + h
    return s


def fused_step(state, h, target, policy, kin, rng, noise=None) -> SamplerState:
    """One fused step B(h) A(h): a single gradient evaluation per iteration.

    A long run of fused steps is equivalent to a run of Strang steps up to
    one half-duration momentum update at each end of the chain (check with
    zero noise, where B substeps compose exactly); the parameter marginal
    of the stationary distribution is unaffected because the boundary
    operator touches only the momentum.
    """
    grad_fn = _as_gradient_fn(target)
    g = grad_fn(state.theta)
    if noise is not None:
        g = noise.apply(g, rng)
    s = operator_b(state, h, g, policy, kin, rng)
    s = operator_a(s, h, kin)
    s.t = state.t + h
    return s
