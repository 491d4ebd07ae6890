"""Independent reference implementations for tests and acceptance runs.

Nothing here shares numerical kernels with the modules it checks: the
closed-form posterior is plain linear algebra, the calibration error is
recomputed with explicit Python-level sorting and grouping, and chain
moments are judged against tolerances derived from an autocorrelation
effective-sample-size estimate rather than fixed constants (fixed
tolerances either flake or mask bias).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, NumericalError

# Chains with (almost) no effective samples cannot support a moment check.
_MIN_CONCLUSIVE_ESS = 10.0


@dataclass
class GaussianPosteriorClosedForm:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if not np.allclose(self.covariance, self.covariance.T, rtol=1e-10, atol=1e-12):
            raise NumericalError("posterior covariance is not symmetric")
        if np.any(np.linalg.eigvalsh(self.covariance) <= 0):
            raise NumericalError("posterior covariance is not positive definite")

    @property
    def marginal_variance(self):
        return np.diag(self.covariance)

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        return rng.multivariate_normal(self.mean, self.covariance, size=n)


def linreg_posterior(x, y, noise_variance, prior_variance) -> GaussianPosteriorClosedForm:
    """Conjugate Gaussian posterior of Bayesian linear regression.

    precision = X'X / noise_variance + I / prior_variance;
    mean = covariance X'y / noise_variance.  ``prior_variance=None`` (or
    inf) drops the prior term, in which case X must have full column rank.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    precision = x.T @ x / noise_variance
    if prior_variance is not None and np.isfinite(prior_variance):
        precision = precision + np.eye(x.shape[1]) / prior_variance
    try:
        covariance = np.linalg.inv(precision)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular posterior precision: {exc}") from None
    if not np.all(np.isfinite(covariance)):
        raise NumericalError("posterior covariance overflowed; check the precision matrix")
    mean = covariance @ (x.T @ y / noise_variance)
    covariance = 0.5 * (covariance + covariance.T)
    return GaussianPosteriorClosedForm(mean, covariance)


def effective_sample_size(series) -> float:
    """Autocorrelation ESS via the initial-positive-pair-sum rule."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if n < 2:
        return 1.0
    x = x - x.mean()
    if np.dot(x, x) == 0.0:
        return 1.0
    nfft = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 1
    tau = max(tau, 1.0)
    return float(min(n, max(1.0, n / tau)))


@dataclass
class MomentCheckReport:
    mean_error: np.ndarray       # |chain mean - reference mean| per component
    mean_tolerance: np.ndarray   # 3 sqrt(reference variance / ESS)
    variance_ratio: np.ndarray   # chain variance / reference variance
    ess: np.ndarray
    inconclusive: bool

    @property
    def mean_ok(self):
        return bool(np.all(self.mean_error <= self.mean_tolerance))


def moment_check(chain, reference: GaussianPosteriorClosedForm) -> MomentCheckReport:
    """Compare chain moments with a closed-form posterior.

    Mean tolerances scale with each component's effective sample size; a
    chain so autocorrelated that no information survives (ESS near 1, e.g.
    a constant chain) is flagged inconclusive instead of failed.
    """
    chain = np.asarray(chain, dtype=np.float64)
    if chain.ndim == 1:
        chain = chain[:, None]
    if chain.shape[0] < 1000:
        raise InsufficientDataError(
            f"moment check needs >= 1000 draws, got {chain.shape[0]}"
        )
    ref_var = reference.marginal_variance
    ess = np.array([effective_sample_size(chain[:, i]) for i in range(chain.shape[1])])
    mean_error = np.abs(chain.mean(axis=0) - reference.mean)
    mean_tolerance = 3.0 * np.sqrt(ref_var / ess)
    variance_ratio = chain.var(axis=0) / ref_var
    return MomentCheckReport(
        mean_error=mean_error,
        mean_tolerance=mean_tolerance,
        variance_ratio=variance_ratio,
        ess=ess,
        inconclusive=bool(np.min(ess) < _MIN_CONCLUSIVE_ESS),
    )


def reference_ece(confidences, correctness, n_bins=8) -> float:
    """Brute-force expected calibration error with equal-count bins.

    Plain Python sorting and grouping; structurally independent of the
    posterior module's implementation, for cross-validation.
    """
    conf = [float(c) for c in np.asarray(confidences).ravel()]
    corr = [float(c) for c in np.asarray(correctness).ravel()]
    n = len(conf)
    if n != len(corr):
        raise InsufficientDataError("confidence and correctness lengths differ")
    if n < n_bins:
        raise InsufficientDataError(f"need >= {n_bins} examples, got {n}")
    order = sorted(range(n), key=lambda i: conf[i])
    base, rem = divmod(n, n_bins)
    total = 0.0
    stop = 0
    for b in range(n_bins):
        size = base + (1 if b < rem else 0)
        members = order[stop:stop + size]
        stop += size
        mean_conf = math.fsum(conf[i] for i in members) / size
        mean_corr = math.fsum(corr[i] for i in members) / size
        total += (size / n) * abs(mean_conf - mean_corr)
    return total
