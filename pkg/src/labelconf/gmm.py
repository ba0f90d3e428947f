"""Loss-based confidence baseline: a two-component 1-D Gaussian mixture
fitted on per-sample cross-entropy losses by expectation maximization.

The component with the smaller mean is "clean"; its posterior probability at
a sample's loss value is that sample's clean confidence. Initialization is a
deterministic split of the sorted losses at the median, so fits are
reproducible without any randomness.
"""

from dataclasses import dataclass

import numpy as np

from .core import ConfidenceVector
from .errors import DegenerateFitError, InputError

__all__ = ["Gmm2", "per_sample_loss", "fit_gmm2", "clean_posterior", "trailing_mean"]

VARIANCE_FLOOR = 1e-6
_LOG_EPS = 1e-12


@dataclass(frozen=True)
class Gmm2:
    """Two-component 1-D Gaussian mixture with means ordered ascending."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).ravel()
        variances = np.asarray(self.variances, dtype=np.float64).ravel()
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if means.shape != (2,) or variances.shape != (2,) or weights.shape != (2,):
            raise InputError("Gmm2 requires exactly two means, variances and weights")
        if np.any(variances < VARIANCE_FLOOR):
            raise InputError(f"variances must be >= {VARIANCE_FLOOR}")
        if np.any(weights <= 0) or np.any(weights >= 1) or abs(weights.sum() - 1.0) > 1e-12:
            raise InputError("weights must lie in (0, 1) and sum to 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "weights", weights)


def per_sample_loss(probs, noisy_labels) -> np.ndarray:
    """Cross-entropy of each sample's predicted probability on its given label."""
    P = np.asarray(getattr(probs, "matrix", probs), dtype=np.float64)
    labels = np.asarray(noisy_labels, dtype=np.int64)
    if P.ndim != 2 or labels.ndim != 1 or labels.shape[0] != P.shape[0]:
        raise InputError(f"probs {P.shape} and labels {labels.shape} disagree")
    if labels.min() < 0 or labels.max() >= P.shape[1]:
        raise InputError(f"labels must lie in [0, {P.shape[1]})")
    row_sums = P.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        raise InputError("probability rows must sum to 1")
    picked = P[np.arange(P.shape[0]), labels]
    return -np.log(np.maximum(picked, _LOG_EPS))


def _log_density(x, mean, variance):
    return -0.5 * ((x - mean) ** 2 / variance) - 0.5 * np.log(2.0 * np.pi * variance)


def _log_likelihood(losses, means, variances, weights):
    joint = np.stack(
        [np.log(weights[c]) + _log_density(losses, means[c], variances[c]) for c in (0, 1)]
    )
    peak = joint.max(axis=0)
    return float(np.sum(peak + np.log(np.exp(joint - peak).sum(axis=0))))


def fit_gmm2(losses, max_iter=100, tol=1e-6, seed=0, return_history=False):
    """EM fit of the two-component mixture.

    Deterministic initialization: sorted losses split into halves, component
    statistics taken per half (the seed argument is accepted for interface
    stability but the fit consumes no randomness). Stops when the
    log-likelihood improves by less than tol or after max_iter rounds. With
    return_history=True also returns the per-iteration log-likelihoods.

    Raises DegenerateFitError when every loss is identical; callers fall
    back to treating all samples as clean.
    """
    losses = np.asarray(losses, dtype=np.float64).ravel()
    if losses.shape[0] < 2:
        raise InputError(f"need at least two losses, got {losses.shape[0]}")
    if not np.isfinite(losses).all():
        raise InputError("losses contain NaN or Inf")
    if np.ptp(losses) == 0.0:
        raise DegenerateFitError("all losses identical; mixture fit is undefined")

    ordered = np.sort(losses)
    half = losses.shape[0] // 2
    lo, hi = ordered[:half], ordered[half:]
    means = np.array([lo.mean(), hi.mean()])
    variances = np.maximum(np.array([lo.var(), hi.var()]), VARIANCE_FLOOR)
    weights = np.array([half, losses.shape[0] - half], dtype=np.float64) / losses.shape[0]

    previous = _log_likelihood(losses, means, variances, weights)
    history = [previous]
    for _ in range(int(max_iter)):
        # E-step: responsibilities in log space for stability.
        joint = np.stack(
            [np.log(weights[c]) + _log_density(losses, means[c], variances[c]) for c in (0, 1)]
        )
        peak = joint.max(axis=0)
        resp = np.exp(joint - peak)
        resp /= resp.sum(axis=0)
        # M-step.
        mass = resp.sum(axis=1)
        mass = np.maximum(mass, _LOG_EPS)
        means = (resp @ losses) / mass
        variances = np.maximum(
            np.array([(resp[c] @ (losses - means[c]) ** 2) / mass[c] for c in (0, 1)]),
            VARIANCE_FLOOR,
        )
        weights = np.clip(mass / losses.shape[0], _LOG_EPS, 1.0 - _LOG_EPS)
        weights = weights / weights.sum()
        current = _log_likelihood(losses, means, variances, weights)
        history.append(current)
        if abs(current - previous) < tol:
            break
        previous = current

    if means[0] > means[1]:
        means, variances, weights = means[::-1], variances[::-1], weights[::-1]
    model = Gmm2(means=means.copy(), variances=variances.copy(), weights=weights.copy())
    if return_history:
        return model, history
    return model


def clean_posterior(model: Gmm2, losses) -> ConfidenceVector:
    """Posterior probability of the smaller-mean ("clean") component."""
    losses = np.asarray(losses, dtype=np.float64).ravel()
    log_clean = np.log(model.weights[0]) + _log_density(losses, model.means[0], model.variances[0])
    log_noisy = np.log(model.weights[1]) + _log_density(losses, model.means[1], model.variances[1])
    peak = np.maximum(log_clean, log_noisy)
    num = np.exp(log_clean - peak)
    posterior = num / (num + np.exp(log_noisy - peak))
    return ConfidenceVector(posterior)


def trailing_mean(loss_history, window=5) -> np.ndarray:
    """Average each sample's loss over the last `window` epochs.

    loss_history is epochs x N; the mean runs over min(window, epochs)
    trailing rows. This is the usual stabilizer for loss-based fits when the
    per-epoch loss is noisy.
    """
    history = np.asarray(loss_history, dtype=np.float64)
    if history.ndim != 2 or history.shape[0] < 1:
        raise InputError(f"loss history must be epochs x N, got shape {history.shape}")
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    return history[-int(window):].mean(axis=0)
