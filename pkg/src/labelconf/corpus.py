"""Synthetic datasets and label-noise injection.

Gaussian blob datasets stand in for real embedding corpora at desk scale:
class means sit at `separation` times deterministic unit directions, so the
geometry is reproducible for any (classes, dim) combination. Noise injection
is a pure function of (labels, seed) and never touches features or truth.
"""

from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, NoisyDataset
from .errors import InputError

__all__ = [
    "NoiseSpec",
    "make_gaussian_blobs",
    "inject_symmetric",
    "inject_asymmetric",
    "apply_noise",
    "validate_transition",
    "corrupt_labels_symmetric",
    "corrupt_labels_asymmetric",
    "split_dataset",
]

_ROW_SUM_TOL = 1e-9


def validate_transition(transition, num_classes=None) -> np.ndarray:
    """Check that a matrix is square, nonnegative and row-stochastic."""
    matrix = np.asarray(transition, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"transition matrix must be square, got shape {matrix.shape}")
    if num_classes is not None and matrix.shape[0] != num_classes:
        raise InputError(
            f"transition matrix is {matrix.shape[0]}x{matrix.shape[0]} "
            f"but the dataset has {num_classes} classes"
        )
    if not np.isfinite(matrix).all():
        raise InputError("transition matrix contains NaN or Inf")
    if matrix.min() < 0:
        raise InputError("transition matrix entries must be nonnegative")
    row_sums = matrix.sum(axis=1)
    bad = np.flatnonzero(np.abs(row_sums - 1.0) > _ROW_SUM_TOL)
    if bad.size:
        raise InputError(
            f"transition matrix row {bad[0]} sums to {row_sums[bad[0]]!r}, expected 1"
        )
    return matrix


@dataclass(frozen=True)
class NoiseSpec:
    """How to corrupt labels: symmetric (uniform redraw) or asymmetric
    (transition-matrix directed), at a given rate, deterministically per seed."""

    kind: str
    rate: float
    seed: int
    transition: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric"):
            raise InputError(f"noise kind must be symmetric or asymmetric, got {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise InputError(f"noise rate must lie in [0, 1], got {self.rate}")
        if self.kind == "asymmetric":
            if self.transition is None:
                raise InputError("asymmetric noise requires a transition matrix")
            object.__setattr__(self, "transition", validate_transition(self.transition))
        elif self.transition is not None:
            raise InputError("symmetric noise does not take a transition matrix")


def _class_directions(num_classes, dim, rng) -> np.ndarray:
    """Deterministic unit directions, orthonormalized while the dimension allows.

    Rows beyond dim cannot be mutually orthogonal; those fall back to the
    plain normalized random draw.
    """
    raw = rng.standard_normal((num_classes, dim))
    directions = np.zeros_like(raw)
    for c in range(num_classes):
        v = raw[c].copy()
        for p in range(min(c, dim)):
            v -= (v @ directions[p]) * directions[p]
        norm = np.linalg.norm(v)
        if norm < 1e-8 * np.linalg.norm(raw[c]):
            v = raw[c]
            norm = np.linalg.norm(v)
        directions[c] = v / norm
    return directions


def make_gaussian_blobs(n, num_classes, dim, separation, spread, seed) -> NoisyDataset:
    """Gaussian blobs with one cluster per class and balanced class counts.

    Class c's mean is separation * u_c for deterministic unit directions u_c;
    per-class counts differ by at most one. The returned dataset has
    noisy_labels equal to the truth (inject noise separately).
    """
    n = int(n)
    num_classes = int(num_classes)
    dim = int(dim)
    if num_classes < 1:
        raise InputError(f"num_classes must be >= 1, got {num_classes}")
    if n < num_classes:
        raise InputError(f"need at least one sample per class: n={n} < C={num_classes}")
    if dim < 1:
        raise InputError(f"dim must be >= 1, got {dim}")
    if separation <= 0:
        raise InputError(f"separation must be > 0, got {separation}")
    if spread < 0:
        raise InputError(f"spread must be >= 0, got {spread}")
    rng = np.random.default_rng(seed)
    directions = _class_directions(num_classes, dim, rng)
    counts = np.full(num_classes, n // num_classes, dtype=np.int64)
    counts[: n % num_classes] += 1
    labels = np.repeat(np.arange(num_classes), counts)
    points = separation * directions[labels] + spread * rng.standard_normal((n, dim))
    return NoisyDataset(FeatureMatrix(points), labels, num_classes, true_labels=labels)


def corrupt_labels_symmetric(labels, num_classes, rate, seed) -> np.ndarray:
    """Redraw each label uniformly over all classes with probability `rate`.

    The redraw may reproduce the original label, so the expected fraction of
    changed labels is rate * (1 - 1/C).
    """
    if not 0.0 <= rate <= 1.0:
        raise InputError(f"rate must lie in [0, 1], got {rate}")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    flip = rng.random(labels.shape[0]) < rate
    redraw = rng.integers(0, num_classes, size=labels.shape[0])
    return np.where(flip, redraw, labels)


def corrupt_labels_asymmetric(labels, transition, rate, seed) -> np.ndarray:
    """With probability `rate`, resample each label from its transition row."""
    if not 0.0 <= rate <= 1.0:
        raise InputError(f"rate must lie in [0, 1], got {rate}")
    labels = np.asarray(labels, dtype=np.int64)
    matrix = validate_transition(transition)
    if labels.size and labels.max() >= matrix.shape[0]:
        raise InputError(
            f"label {labels.max()} out of range for a {matrix.shape[0]}-class transition matrix"
        )
    rng = np.random.default_rng(seed)
    flip = rng.random(labels.shape[0]) < rate
    u = rng.random(labels.shape[0])
    cumulative = np.cumsum(matrix, axis=1)
    cumulative[:, -1] = 1.0  # guard against rounding in the row sums
    resampled = (cumulative[labels] >= u[:, None]).argmax(axis=1)
    return np.where(flip, resampled, labels)


def inject_symmetric(dataset: NoisyDataset, rate, seed) -> NoisyDataset:
    """Symmetric label noise on a dataset; features and truth are untouched."""
    corrupted = corrupt_labels_symmetric(dataset.noisy_labels, dataset.num_classes, rate, seed)
    return dataset.with_noisy_labels(corrupted)


def inject_asymmetric(dataset: NoisyDataset, rate, transition, seed) -> NoisyDataset:
    """Transition-directed label noise on a dataset."""
    matrix = validate_transition(transition, dataset.num_classes)
    corrupted = corrupt_labels_asymmetric(dataset.noisy_labels, matrix, rate, seed)
    return dataset.with_noisy_labels(corrupted)


def apply_noise(dataset: NoisyDataset, spec: NoiseSpec) -> NoisyDataset:
    if spec.kind == "symmetric":
        return inject_symmetric(dataset, spec.rate, spec.seed)
    return inject_asymmetric(dataset, spec.rate, spec.transition, spec.seed)


def split_dataset(dataset: NoisyDataset, n_first, seed):
    """Shuffle deterministically and split into (first, rest) datasets.

    Used to carve a held-out test set out of one generated corpus so both
    halves share the same class geometry.
    """
    n_first = int(n_first)
    if not 1 <= n_first <= dataset.n - 1:
        raise InputError(f"n_first must lie in [1, {dataset.n - 1}], got {n_first}")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    truth = dataset.true_labels_for_eval() if dataset.has_true_labels() else None

    def take(idx):
        return NoisyDataset(
            FeatureMatrix(dataset.features.data[idx]),
            dataset.noisy_labels[idx],
            dataset.num_classes,
            true_labels=None if truth is None else truth[idx],
        )

    return take(perm[:n_first]), take(perm[n_first:])
