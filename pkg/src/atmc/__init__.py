"""Adaptive-thermostat stochastic-gradient MCMC samplers.

A sampler library and experiment driver built around a split-operator
integrator whose momentum substep is an exactly sampled Ornstein-Uhlenbeck
transition.  The thermostat policies adapt the injected momentum noise to
the (unknown) stochastic-gradient noise; baselines (constant-noise
thermostat, SGLD, SGHMC) share the same integrator.  Hot chain loops run
on a compiled Cython kernel when available, with a numpy fallback selected
at import (see :mod:`atmc.backend`).
"""

from . import backend, oracle
from .errors import (
    AtmcError,
    ConfigError,
    DegenerateDirectionError,
    EmptyEnsembleError,
    InsufficientDataError,
    InvalidStateError,
    NumericalError,
)
from .gradnoise import NoiseKind, NoiseModel, noisy_gradient
from .integrator import (
    SamplerState,
    ScheduleKind,
    StepSizeSchedule,
    fused_step,
    operator_a,
    operator_b,
    ou_coefficient,
    step_size,
    step_sizes,
    strang_step,
)
from .kinetics import KineticsKind, KineticsSpec, kinetic_energy, mass, velocity
from .mlp import (
    MlpClassifier,
    MlpTarget,
    direction_prior_grad,
    group_laplace_grad,
    selu,
    selu_grad,
    weightnorm_feature,
)
from .posterior import (
    CalibrationReport,
    PredictiveEnsemble,
    accuracy,
    calibration,
    confidence_correctness,
    nll,
    posterior_predictive,
)
from .sampler import (
    ChainResult,
    CollectRule,
    Method,
    MomentSummary,
    SampleRecord,
    SamplerConfig,
    make_sampler,
    run_chain,
)
from .targets import (
    BayesLinRegTarget,
    ConstantGradientTarget,
    GaussianTarget,
    load_dataset,
    save_dataset,
    two_moons,
)
from .thermostat import PolicyKind, ThermostatPolicy, alpha, beta

__version__ = "0.1.0"
