"""Posterior-predictive ensembles and calibration statistics.

The posterior predictive is the arithmetic mean of member class
probabilities.  Calibration groups predictions into eight bins by
confidence (the probability assigned to the predicted class); by default
the bins hold equal counts, with a fixed-width variant available.  The
scalar summary is the expected calibration error: the count-weighted mean
absolute gap between bin confidence and bin accuracy.

All aggregation here is pure and order-independent: permuting ensemble
members or evaluation examples cannot change any output bit.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyEnsembleError, InsufficientDataError

PROBABILITY_FLOOR = 1e-12


@dataclass
class PredictiveEnsemble:
    """Averaged class probabilities of a parameter-sample ensemble."""

    member_count: int
    probabilities: np.ndarray  # (n_examples, n_classes), rows sum to 1


def posterior_predictive(members, target, inputs) -> PredictiveEnsemble:
    """Mean of per-member predictive distributions over ``inputs``.

    Member probabilities are sorted before accumulation so the result is
    bit-identical under any permutation of the member list.
    """
    members = list(members)
    if not members:
        raise EmptyEnsembleError("posterior predictive needs at least one member")
    stacked = np.stack([target.predict(theta, inputs) for theta in members])
    stacked.sort(axis=0, kind="stable")
    return PredictiveEnsemble(
        member_count=len(members),
        probabilities=np.mean(stacked, axis=0),
    )


def _check_predictions(probabilities, labels):
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probabilities.ndim != 2 or labels.shape != (probabilities.shape[0],):
        raise ConfigError(
            f"predictions {probabilities.shape} and labels {labels.shape} do not line up"
        )
    if np.any(labels < 0) or np.any(labels >= probabilities.shape[1]):
        raise ConfigError("labels outside the class range of the predictions")
    return probabilities, labels


def nll(probabilities, labels) -> float:
    """Mean negative log-likelihood (nats) of the true labels.

    Probabilities below 1e-12 at the true label are clamped; a warning
    reports how many were.
    """
    probabilities, labels = _check_predictions(probabilities, labels)
    p_true = probabilities[np.arange(labels.size), labels]
    n_clamped = int(np.sum(p_true < PROBABILITY_FLOOR))
    if n_clamped:
        warnings.warn(
            f"clamped {n_clamped} zero-probability true labels to {PROBABILITY_FLOOR}",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(-np.mean(np.log(np.maximum(p_true, PROBABILITY_FLOOR))))


def accuracy(probabilities, labels) -> float:
    """Fraction of arg-max predictions matching the label (ties -> lowest class)."""
    probabilities, labels = _check_predictions(probabilities, labels)
    return float(np.mean(np.argmax(probabilities, axis=1) == labels))


def confidence_correctness(probabilities, labels):
    """Per-example confidence (max probability) and correctness indicator."""
    probabilities, labels = _check_predictions(probabilities, labels)
    predicted = np.argmax(probabilities, axis=1)
    confidence = probabilities[np.arange(labels.size), predicted]
    return confidence, (predicted == labels).astype(np.float64)


@dataclass
class CalibrationBin:
    count: int
    mean_confidence: float
    mean_accuracy: float


@dataclass
class CalibrationReport:
    bins: list
    ece: float
    scheme: str

    def to_csv_lines(self):
        """Rows ``bin,count,mean_confidence,mean_accuracy`` + trailing ECE line."""
        lines = [
            f"{i},{b.count},{b.mean_confidence!r},{b.mean_accuracy!r}"
            for i, b in enumerate(self.bins)
        ]
        lines.append(f"ece,{self.ece!r}")
        return lines


def calibration(probabilities, labels, n_bins=8, scheme="count") -> CalibrationReport:
    """Bin predictions by confidence and compare confidence with accuracy.

    ``scheme="count"`` (default) sorts by confidence and makes bins of
    equal count, earlier bins absorbing the remainder examples;
    ``scheme="width"`` uses fixed confidence intervals instead.
    """
    confidence, correct = confidence_correctness(probabilities, labels)
    n = confidence.size
    if n < n_bins:
        raise InsufficientDataError(f"calibration needs >= {n_bins} examples, got {n}")
    bins = []
    if scheme == "count":
        order = np.argsort(confidence, kind="stable")
        base, rem = divmod(n, n_bins)
        stop = 0
        for i in range(n_bins):
            size = base + (1 if i < rem else 0)
            sel = order[stop:stop + size]
            stop += size
            bins.append(CalibrationBin(
                count=size,
                mean_confidence=float(np.mean(confidence[sel])),
                mean_accuracy=float(np.mean(correct[sel])),
            ))
    elif scheme == "width":
        idx = np.minimum((confidence * n_bins).astype(np.int64), n_bins - 1)
        for i in range(n_bins):
            sel = idx == i
            size = int(np.sum(sel))
            if size == 0:
                bins.append(CalibrationBin(0, 0.0, 0.0))
            else:
                bins.append(CalibrationBin(
                    count=size,
                    mean_confidence=float(np.mean(confidence[sel])),
                    mean_accuracy=float(np.mean(correct[sel])),
                ))
    else:
        raise ConfigError(f"unknown binning scheme {scheme!r}; use 'count' or 'width'")
    ece = sum(
        (b.count / n) * abs(b.mean_confidence - b.mean_accuracy) for b in bins if b.count
    )
    return CalibrationReport(bins=bins, ece=float(ece), scheme=scheme)
