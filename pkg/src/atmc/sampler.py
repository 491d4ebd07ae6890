"""Sampler assembly and chain execution.

``make_sampler`` wires a method name to its thermostat policy and
integration mode:

* ``ATMC``   adaptive-noise thermostat, temperature evolves;
* ``SGNHT``  constant-noise thermostat, temperature evolves (can reach
             the negative-friction regime);
* ``SGHMC``  fixed noise and friction (both equal to the configured
             momentum-noise level), temperature frozen at zero;
* ``SGLD``   momentum-free: theta <- theta - h grad + sqrt(2h) eta.

``run_chain`` drives the active backend kernel in blocks: per block it
evaluates the step-size schedule, pre-draws all noise, calls the kernel,
and turns the kernel's snapshots into :class:`SampleRecord` objects.
Chains are reproducible: a seed spawns three independent substreams
(initialization, dynamics noise, minibatch selection), so diagnostics
cadence never perturbs the dynamics, and both kernel backends consume the
identical stream.
"""

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ConfigError, InvalidStateError
from .gradnoise import NoiseKind, NoiseModel
from .integrator import SamplerState, ScheduleKind, StepSizeSchedule, step_sizes
from .kinetics import KineticsKind, KineticsSpec, kinetic_energy
from .thermostat import ThermostatPolicy, beta as policy_beta

# Noise blocks hold at most this many floats; block length adapts to the
# chain dimension.  Part of the reproducibility contract: changing it
# would reorder the gradient-noise and momentum-noise draws.
_BLOCK_FLOAT_BUDGET = 1 << 20
_MAX_BLOCK_STEPS = 4096


class Method(enum.Enum):
    ATMC = "atmc"
    SGNHT = "sgnht"
    SGLD = "sgld"
    SGHMC = "sghmc"


@dataclass(frozen=True)
class CollectRule:
    """When to snapshot a posterior sample (always after burn-in)."""

    kind: str  # "none" | "cycle_end" | "every"
    every: int = 0

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def cycle_end(cls):
        return cls("cycle_end")

    @classmethod
    def every_k(cls, k):
        if k <= 0:
            raise ConfigError(f"collection stride must be positive, got {k}")
        return cls("every", int(k))


@dataclass
class SampleRecord:
    """One diagnostics row, optionally carrying a collected parameter snapshot.

    ``step`` counts completed steps (0 is the pre-run state).  Only the
    deterministic fields go into the serialized line format; wall time is
    in-memory metadata.
    """

    step: int
    wall_time: float
    h: float
    loss: float
    kinetic: float
    xi_mean_abs: float
    beta_mean: float
    collected: bool
    theta: np.ndarray | None = None

    def to_json_line(self):
        def num(x):
            return "NaN" if math.isnan(x) else repr(float(x))

        return (
            f'{{"step": {self.step}, "h": {num(self.h)}, "loss": {num(self.loss)}, '
            f'"kinetic": {num(self.kinetic)}, "xi_mean_abs": {num(self.xi_mean_abs)}, '
            f'"beta_mean": {num(self.beta_mean)}, '
            f'"collected": {"true" if self.collected else "false"}}}'
        )


@dataclass
class MomentSummary:
    """Per-component time averages accumulated over all post-burn-in steps."""

    count: int
    theta_mean: np.ndarray
    theta_var: np.ndarray
    xi_mean: np.ndarray


@dataclass
class ChainResult:
    records: list
    final_state: SamplerState
    min_friction: float
    max_speed: float
    moments: MomentSummary | None = None
    aborted: bool = False
    abort_reason: str = ""

    @property
    def samples(self):
        return [r.theta for r in self.records if r.collected]

    @property
    def sample_steps(self):
        return [r.step for r in self.records if r.collected]


@dataclass
class SamplerConfig:
    method: Method
    kinetics: KineticsSpec
    schedule: StepSizeSchedule
    momentum_noise: float
    total_steps: int
    burn_in_steps: int = -1          # -1: default to 15% of total_steps
    collect: CollectRule = field(default_factory=CollectRule.none)
    seed: int = 0
    batch_size: int = 0              # 0: full-data gradients
    record_every: int = 0            # 0: only collection events + endpoints
    initial_momentum: float | np.ndarray | None = None
    initial_temperature: float | np.ndarray | None = None
    track_moments: bool = False

    def resolved_burn_in(self):
        if self.burn_in_steps >= 0:
            return self.burn_in_steps
        return int(0.15 * self.total_steps)

    def validate(self):
        if not isinstance(self.method, Method):
            raise ConfigError(f"unknown sampler method {self.method!r}")
        if self.total_steps < 0:
            raise ConfigError(f"total_steps must be >= 0, got {self.total_steps}")
        if self.momentum_noise < 0:
            raise ConfigError(f"momentum_noise must be >= 0, got {self.momentum_noise}")
        burn_in = self.resolved_burn_in()
        if self.collect.kind != "none" and self.total_steps <= burn_in:
            raise ConfigError(
                f"total_steps ({self.total_steps}) must exceed burn_in_steps ({burn_in}) "
                "when collecting samples"
            )
        if self.collect.kind == "cycle_end" and self.schedule.kind != ScheduleKind.CYCLIC:
            raise ConfigError("cycle_end collection requires a cyclic step-size schedule")
        if self.batch_size < 0:
            raise ConfigError(f"batch_size must be >= 0, got {self.batch_size}")
        if self.record_every < 0:
            raise ConfigError(f"record_every must be >= 0, got {self.record_every}")


@dataclass(frozen=True)
class AssembledSampler:
    policy: ThermostatPolicy
    evolve_xi: bool
    momentum_free: bool


def make_sampler(method: Method, momentum_noise: float) -> AssembledSampler:
    """Thermostat policy and integration mode for a named method."""
    if method == Method.ATMC:
        return AssembledSampler(ThermostatPolicy.atmc(momentum_noise), True, False)
    if method == Method.SGNHT:
        return AssembledSampler(ThermostatPolicy.nose_hoover(momentum_noise), True, False)
    if method == Method.SGHMC:
        policy = ThermostatPolicy.fixed(momentum_noise, momentum_noise)
        return AssembledSampler(policy, False, False)
    if method == Method.SGLD:
        return AssembledSampler(ThermostatPolicy.none(), False, True)
    raise ConfigError(f"unknown sampler method {method!r}")


def _initial_vector(override, d, label):
    if override is None:
        return np.zeros(d)
    arr = np.asarray(override, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(d, float(arr))
    if arr.shape != (d,):
        raise ConfigError(f"{label} override has shape {arr.shape}, expected ({d},)")
    return arr.copy()


def _gradient_dispatch(target, batch_size, rng_batch):
    """Pick the kernel gradient mode for this target.

    Targets may advertise a native elementwise/minibatch form through
    ``kernel_gradient_spec``; everything else goes through a per-step
    Python callback (drawing its own minibatch indices from the batch
    stream, one draw per step, so native and callback paths consume
    the stream identically).
    """
    d = target.dim
    none_f = np.zeros(0)
    none_m = np.zeros((0, 0))
    none_i = np.zeros((0, 0), dtype=np.int64)
    spec = None
    if hasattr(target, "kernel_gradient_spec"):
        spec = target.kernel_gradient_spec()
    if spec is not None and spec[0] == "gaussian":
        _, mean, prec = spec
        return {
            "mode": 1, "fn": None,
            "g_mean": np.ascontiguousarray(mean, dtype=np.float64),
            "g_prec": np.ascontiguousarray(prec, dtype=np.float64),
            "lr_x": none_m, "lr_y": none_f, "row_scale": 0.0, "prior_prec": 0.0,
            "draw_idx": None,
        }
    if spec is not None and spec[0] == "linreg" and batch_size > 0:
        _, x, y, noise_var, prior_var = spec
        n = x.shape[0]
        if batch_size > n:
            raise ConfigError(f"batch_size {batch_size} exceeds dataset size {n}")
        row_scale = n / (batch_size * noise_var)

        def draw_idx(k):
            return rng_batch.integers(0, n, size=(k, batch_size), dtype=np.int64)

        return {
            "mode": 2, "fn": None,
            "g_mean": none_f, "g_prec": none_f,
            "lr_x": np.ascontiguousarray(x, dtype=np.float64),
            "lr_y": np.ascontiguousarray(y, dtype=np.float64),
            "row_scale": row_scale, "prior_prec": 1.0 / prior_var,
            "draw_idx": draw_idx,
        }
    if batch_size > 0 and target.n_examples > 0:
        n = target.n_examples
        if batch_size > n:
            raise ConfigError(f"batch_size {batch_size} exceeds dataset size {n}")

        def fn(theta):
            idx = rng_batch.integers(0, n, size=batch_size, dtype=np.int64)
            return target.minibatch_gradient(theta, idx)
    else:
        fn = target.full_gradient
    return {
        "mode": 0, "fn": fn,
        "g_mean": none_f, "g_prec": none_f,
        "lr_x": none_m, "lr_y": none_f, "row_scale": 0.0, "prior_prec": 0.0,
        "draw_idx": None,
    }


def _loss_of(target, theta):
    if hasattr(target, "log_joint"):
        return -target.log_joint(theta)
    return math.nan


def run_chain(config: SamplerConfig, target, noise: NoiseModel | None = None) -> ChainResult:
    """Run one chain and return its records plus whole-run statistics.

    The chain starts from the target's initial position with zero momentum
    and temperature (unless overridden), iterates fused steps (or the
    momentum-free update for SGLD) with per-step step sizes from the
    schedule, and snapshots the parameters at collection events.
    """
    config.validate()
    assembled = make_sampler(config.method, config.momentum_noise)
    d = target.dim
    burn_in = config.resolved_burn_in()
    total = config.total_steps

    seed_seq = np.random.SeedSequence(config.seed)
    init_ss, noise_ss, batch_ss = seed_seq.spawn(3)
    rng_init = np.random.default_rng(init_ss)
    rng_noise = np.random.default_rng(noise_ss)
    rng_batch = np.random.default_rng(batch_ss)

    # owned, mutable state buffer (never alias an array the target holds)
    theta = np.array(target.initial_position(rng_init), dtype=np.float64, copy=True)
    if theta.shape != (d,):
        raise ConfigError(f"target initial position has shape {theta.shape}, expected ({d},)")
    p = _initial_vector(config.initial_momentum, d, "initial momentum")
    xi = _initial_vector(config.initial_temperature, d, "initial temperature")
    if assembled.momentum_free:
        p[:] = 0.0
        xi[:] = 0.0

    use_grad_noise = noise is not None and noise.kind == NoiseKind.GAUSSIAN_DIAG
    sigma = None
    if use_grad_noise:
        sigma = np.array(np.broadcast_to(noise.sigma, (d,)), dtype=np.float64)

    dispatch = _gradient_dispatch(target, config.batch_size, rng_batch)
    kin = config.kinetics
    policy = assembled.policy

    track = config.track_moments
    accum_theta = np.zeros(d) if track else np.zeros(0)
    accum_theta2 = np.zeros(d) if track else np.zeros(0)
    accum_xi = np.zeros(d) if track else np.zeros(0)
    accum_count = 0

    t0 = time.perf_counter()
    records = [_initial_record(target, theta, p, xi, policy, kin, assembled, t0)]

    kern = backend.kernels()
    block_cap = max(1, min(_MAX_BLOCK_STEPS, _BLOCK_FLOAT_BUDGET // max(d, 1)))
    min_friction = math.inf
    max_speed = 0.0
    clock = 0.0
    aborted = False
    abort_reason = ""
    n = config.schedule.cycle_length

    start = 0
    while start < total:
        k = min(block_cap, total - start)
        h_block = step_sizes(config.schedule, start, k)
        eta_grad = rng_noise.standard_normal((k, d)) if use_grad_noise else None
        eta_main = rng_noise.standard_normal((k, d))
        lr_idx = np.zeros((0, 0), dtype=np.int64)
        if dispatch["draw_idx"] is not None:
            lr_idx = dispatch["draw_idx"](k)

        rec_local, rec_collected = _plan_records(
            start, k, total, burn_in, config.record_every, config.collect, n
        )
        snap_out = np.zeros((rec_local.size, d))
        diag_out = np.zeros((rec_local.size, 3))
        accum_from = k if not track else min(k, max(0, burn_in - start))

        try:
            if assembled.momentum_free:
                n_acc = kern.run_sgld_block(
                    theta, h_block, eta_main, eta_grad, sigma,
                    dispatch["mode"], dispatch["fn"],
                    dispatch["g_mean"], dispatch["g_prec"],
                    dispatch["lr_x"], dispatch["lr_y"], lr_idx,
                    dispatch["row_scale"], dispatch["prior_prec"],
                    rec_local, snap_out, diag_out,
                    accum_theta, accum_theta2, accum_from, start,
                )
            else:
                blk_min_beta, blk_max_speed, n_acc = kern.run_fused_block(
                    theta, p, xi, h_block, eta_main, eta_grad, sigma,
                    int(kin.kind), kin.mass,
                    kin.speed_cap if kin.kind == KineticsKind.HYPERBOLIC else 0.0,
                    int(policy.kind), policy.momentum_noise,
                    policy.fixed_noise, policy.fixed_friction,
                    assembled.evolve_xi,
                    dispatch["mode"], dispatch["fn"],
                    dispatch["g_mean"], dispatch["g_prec"],
                    dispatch["lr_x"], dispatch["lr_y"], lr_idx,
                    dispatch["row_scale"], dispatch["prior_prec"],
                    rec_local, snap_out, diag_out,
                    accum_theta, accum_theta2, accum_xi, accum_from, start,
                )
                min_friction = min(min_friction, blk_min_beta)
                max_speed = max(max_speed, blk_max_speed)
        except InvalidStateError as exc:
            aborted = True
            abort_reason = str(exc)
            break

        accum_count += n_acc
        clock += float(np.sum(h_block))
        now = time.perf_counter() - t0
        for r in range(rec_local.size):
            j = start + int(rec_local[r])
            snap = snap_out[r]
            collected = bool(rec_collected[r])
            records.append(SampleRecord(
                step=j + 1,
                wall_time=now,
                h=float(h_block[rec_local[r]]),
                loss=_loss_of(target, snap),
                kinetic=float(diag_out[r, 0]),
                xi_mean_abs=float(diag_out[r, 1]),
                beta_mean=float(diag_out[r, 2]),
                collected=collected,
                theta=snap.copy() if collected else None,
            ))
        start += k

    moments = None
    if track and accum_count > 0:
        mean = accum_theta / accum_count
        moments = MomentSummary(
            count=accum_count,
            theta_mean=mean,
            theta_var=accum_theta2 / accum_count - mean * mean,
            xi_mean=accum_xi / accum_count,
        )

    return ChainResult(
        records=records,
        final_state=SamplerState(theta, p, xi, clock),
        min_friction=min_friction,
        max_speed=max_speed,
        moments=moments,
        aborted=aborted,
        abort_reason=abort_reason,
    )


def _initial_record(target, theta, p, xi, policy, kin, assembled, t0):
    if assembled.momentum_free:
        kinetic = 0.0
        beta_mean = 0.0
        xi_abs = 0.0
    else:
        kinetic = kinetic_energy(kin, p)
        beta_mean = float(np.mean(policy_beta(policy, xi)))
        xi_abs = float(np.mean(np.abs(xi)))
    return SampleRecord(
        step=0,
        wall_time=0.0,
        h=0.0,
        loss=_loss_of(target, theta),
        kinetic=kinetic,
        xi_mean_abs=xi_abs,
        beta_mean=beta_mean,
        collected=False,
        theta=None,
    )


def _plan_records(start, k, total, burn_in, record_every, collect, cycle_length):
    """Local indices to record in this block, with their collected flags."""
    local = np.arange(k)
    global_idx = start + local
    collected = np.zeros(k, dtype=bool)
    if collect.kind == "cycle_end":
        collected = (global_idx % cycle_length == cycle_length - 1) & (global_idx >= burn_in)
    elif collect.kind == "every":
        since = global_idx - burn_in
        collected = (global_idx >= burn_in) & ((since + 1) % collect.every == 0)
    diagnostic = np.zeros(k, dtype=bool)
    if record_every > 0:
        diagnostic = (global_idx + 1) % record_every == 0
    diagnostic[global_idx == total - 1] = True
    mask = collected | diagnostic
    return local[mask].astype(np.int64), collected[mask]
