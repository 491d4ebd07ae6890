"""Differentiable targets: analytic verification distributions and data I/O.

A target exposes the negative log joint L(theta) = -log p(data, theta)
through gradients.  The informal interface (duck-typed, no registration):

    dim                 number of parameters
    n_examples          dataset size (0 for purely analytic targets)
    initial_position(rng) -> theta0
    full_gradient(theta) -> grad L
    minibatch_gradient(theta, idx) -> unbiased estimate of grad L using
                        the dataset rows in idx (dataset term rescaled by
                        n_examples / len(idx); prior term not rescaled)
    log_joint(theta) -> -L(theta), where tractable
    predict(theta, x) -> class probabilities (classifiers only)

Analytic targets here have closed-form posteriors/moments, which is what
chain-level verification runs against.  The neural-network classifier
target lives in :mod:`atmc.mlp`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class GaussianTarget:
    """Independent Gaussian posterior N(mean, diag(variance)); known moments."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.variance = np.broadcast_to(
            np.asarray(self.variance, dtype=np.float64), self.mean.shape
        ).copy()
        if np.any(self.variance <= 0):
            raise ConfigError("gaussian target variance must be positive elementwise")

    @classmethod
    def standard(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self):
        return self.mean.size

    n_examples = 0

    def initial_position(self, rng):
        return np.zeros(self.dim)

    def full_gradient(self, theta):
        return (np.asarray(theta, dtype=np.float64) - self.mean) / self.variance

    def minibatch_gradient(self, theta, idx):
        return self.full_gradient(theta)

    def log_joint(self, theta):
        d = np.asarray(theta, dtype=np.float64) - self.mean
        return float(-0.5 * np.sum(d * d / self.variance))

    def kernel_gradient_spec(self):
        return ("gaussian", self.mean, 1.0 / self.variance)


@dataclass
class BayesLinRegTarget:
    """Bayesian linear regression with Gaussian noise and isotropic prior.

    L(theta) = ||X theta - y||^2 / (2 noise_variance)
             + ||theta||^2 / (2 prior_variance).
    The posterior is the conjugate Gaussian held by the oracle module.
    """

    x: np.ndarray
    y: np.ndarray
    noise_variance: float
    prior_variance: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ConfigError(
                f"design matrix {self.x.shape} and response {self.y.shape} do not line up"
            )
        if self.noise_variance <= 0 or self.prior_variance <= 0:
            raise ConfigError("noise and prior variances must be positive")

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def n_examples(self):
        return self.x.shape[0]

    def initial_position(self, rng):
        return np.zeros(self.dim)

    def full_gradient(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        resid = self.x @ theta - self.y
        return self.x.T @ resid / self.noise_variance + theta / self.prior_variance

    def minibatch_gradient(self, theta, idx):
        theta = np.asarray(theta, dtype=np.float64)
        idx = np.asarray(idx)
        xb = self.x[idx]
        resid = xb @ theta - self.y[idx]
        scale = self.n_examples / (idx.size * self.noise_variance)
        return scale * (xb.T @ resid) + theta / self.prior_variance

    def log_joint(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        resid = self.x @ theta - self.y
        return float(
            -0.5 * np.dot(resid, resid) / self.noise_variance
            - 0.5 * np.dot(theta, theta) / self.prior_variance
        )

    def kernel_gradient_spec(self):
        return ("linreg", self.x, self.y, self.noise_variance, self.prior_variance)


@dataclass
class ConstantGradientTarget:
    """Fixed gradient of configurable magnitude; for stress tests."""

    gradient: np.ndarray

    def __post_init__(self):
        self.gradient = np.atleast_1d(np.asarray(self.gradient, dtype=np.float64))

    @property
    def dim(self):
        return self.gradient.size

    n_examples = 0

    def initial_position(self, rng):
        return np.zeros(self.dim)

    def full_gradient(self, theta):
        return self.gradient.copy()

    def minibatch_gradient(self, theta, idx):
        return self.gradient.copy()

    def log_joint(self, theta):
        return float(-np.dot(self.gradient, np.asarray(theta, dtype=np.float64)))


def load_dataset(path, n_features=None, delimiter=None):
    """Read a delimiter-separated classification dataset.

    One example per row: float features followed by an integer class
    label.  The delimiter is sniffed (comma, semicolon, tab, or
    whitespace) unless given.  If ``n_features`` is supplied the column
    count is validated against it.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if delimiter is None:
                for cand in (",", ";", "\t"):
                    if cand in line:
                        delimiter = cand
                        break
            parts = line.split(delimiter) if delimiter else line.split()
            try:
                values = [float(v) for v in parts]
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: unparseable value ({exc})") from None
            rows.append(values)
    if not rows:
        raise ConfigError(f"{path}: dataset is empty")
    width = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ConfigError(
                f"{path}: row {lineno} has {len(row)} columns, expected {width}"
            )
    if n_features is not None and width != n_features + 1:
        raise ConfigError(
            f"{path}: {width} columns but the model expects {n_features} features + 1 label"
        )
    data = np.asarray(rows, dtype=np.float64)
    features = data[:, :-1]
    labels = data[:, -1]
    if np.any(labels != np.round(labels)) or np.any(labels < 0):
        raise ConfigError(f"{path}: last column must hold non-negative integer labels")
    return features, labels.astype(np.int64)


def save_dataset(path, features, labels, delimiter=","):
    """Write a dataset in the format :func:`load_dataset` reads."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(features, labels):
            fh.write(delimiter.join(repr(float(v)) for v in row))
            fh.write(f"{delimiter}{int(label)}\n")


def two_moons(n, noise_std=0.15, rng=None):
    """The classic interleaving-half-circles binary classification set."""
    rng = np.random.default_rng(rng)
    n_top = n // 2
    n_bot = n - n_top
    t_top = rng.uniform(0.0, np.pi, n_top)
    t_bot = rng.uniform(0.0, np.pi, n_bot)
    top = np.column_stack([np.cos(t_top), np.sin(t_top)])
    bot = np.column_stack([1.0 - np.cos(t_bot), 0.5 - np.sin(t_bot)])
    x = np.vstack([top, bot]) + noise_std * rng.standard_normal((n, 2))
    y = np.concatenate([np.zeros(n_top, dtype=np.int64), np.ones(n_bot, dtype=np.int64)])
    order = rng.permutation(n)
    return x[order], y[order]
