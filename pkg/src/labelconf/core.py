"""Shared domain types for noisy-label confidence estimation.

Every type is immutable after construction (arrays are copied in and their
write flag cleared), so instances can be shared across threads freely.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .errors import InputError

__all__ = [
    "FeatureMatrix",
    "NoisyDataset",
    "SparseGraph",
    "LabelDistribution",
    "ConfidenceVector",
    "one_hot",
]


def _freeze(arr):
    arr.setflags(write=False)
    return arr


def _as_label_array(labels, name):
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        cast = arr.astype(np.int64)
        if not np.array_equal(cast, arr):
            raise InputError(f"{name} must contain integers")
        arr = cast
    return arr.astype(np.int64, copy=True)


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense N x d matrix of sample embeddings, float64, row-major."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C")
        if data.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InputError(f"features need at least one row and column, got {data.shape}")
        if not np.isfinite(data).all():
            raise InputError("features contain NaN or Inf entries")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


class NoisyDataset:
    """Feature matrix plus integer noisy labels and optional hidden truth.

    True labels are deliberately kept off the public attribute surface:
    estimators consume only ``features`` and ``noisy_labels``, while
    evaluation code must call :meth:`true_labels_for_eval` explicitly.
    """

    def __init__(self, features, noisy_labels, num_classes, true_labels=None):
        if not isinstance(features, FeatureMatrix):
            features = FeatureMatrix(features)
        if int(num_classes) < 1:
            raise InputError(f"num_classes must be >= 1, got {num_classes}")
        labels = _as_label_array(noisy_labels, "noisy_labels")
        if labels.shape[0] != features.n:
            raise InputError(
                f"noisy_labels has length {labels.shape[0]} but features have {features.n} rows"
            )
        if labels.min() < 0 or labels.max() >= int(num_classes):
            raise InputError(
                f"noisy_labels must lie in [0, {num_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        self.features = features
        self.noisy_labels = _freeze(labels)
        self.num_classes = int(num_classes)
        if true_labels is None:
            self._true_labels = None
        else:
            truth = _as_label_array(true_labels, "true_labels")
            if truth.shape[0] != features.n:
                raise InputError(
                    f"true_labels has length {truth.shape[0]} but features have {features.n} rows"
                )
            if truth.min() < 0 or truth.max() >= int(num_classes):
                raise InputError(f"true_labels must lie in [0, {num_classes})")
            self._true_labels = _freeze(truth)

    @property
    def n(self) -> int:
        return self.features.n

    def one_hot_noisy(self) -> np.ndarray:
        """Materialize the one-hot view of the noisy labels (N x C)."""
        return one_hot(self.noisy_labels, self.num_classes)

    def has_true_labels(self) -> bool:
        return self._true_labels is not None

    def true_labels_for_eval(self) -> np.ndarray:
        """Hidden ground truth; for evaluation and metrics only."""
        if self._true_labels is None:
            raise InputError("dataset carries no true labels")
        return self._true_labels

    def with_noisy_labels(self, noisy_labels) -> "NoisyDataset":
        """New dataset sharing features and truth but with replaced noisy labels."""
        return NoisyDataset(self.features, noisy_labels, self.num_classes, self._true_labels)


def one_hot(labels, num_classes) -> np.ndarray:
    """One-hot encode integer labels into an N x C float matrix.

    Raises InputError when any label falls outside [0, num_classes).
    """
    labels = _as_label_array(labels, "labels")
    num_classes = int(num_classes)
    if num_classes < 1:
        raise InputError(f"num_classes must be >= 1, got {num_classes}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InputError(
            f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]"
        )
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass(frozen=True)
class SparseGraph:
    """Symmetric weighted graph: adjacency A, degree vector, normalized adjacency.

    ``normalized`` is D^{-1/2} A D^{-1/2} where D holds the row sums of A.
    Both sparse matrices are stored symmetric with identical values across
    the diagonal; the spectrum of the normalized matrix lies in [-1, 1].
    """

    adjacency: sparse.csr_matrix
    degrees: np.ndarray
    normalized: sparse.csr_matrix

    def __post_init__(self):
        adj = self.adjacency
        nrm = self.normalized
        if adj.shape[0] != adj.shape[1]:
            raise InputError(f"adjacency must be square, got {adj.shape}")
        if nrm.shape != adj.shape:
            raise InputError("normalized adjacency shape differs from adjacency")
        degrees = np.asarray(self.degrees, dtype=np.float64).ravel()
        if degrees.shape[0] != adj.shape[0]:
            raise InputError("degree vector length differs from node count")
        if (adj != adj.T).nnz != 0:
            raise InputError("adjacency must be exactly symmetric")
        if (nrm != nrm.T).nnz != 0:
            raise InputError("normalized adjacency must be exactly symmetric")
        if np.any(adj.diagonal() != 0.0):
            raise InputError("adjacency must have a zero diagonal (no self-loops)")
        if adj.data.size and adj.data.min() < 0:
            raise InputError("adjacency weights must be nonnegative")
        if np.any(degrees <= 0):
            raise InputError("all degrees must be positive")
        row_sums = np.ravel(adj.sum(axis=1))
        if not np.allclose(row_sums, degrees, rtol=1e-12, atol=0.0):
            raise InputError("degree vector does not match adjacency row sums")
        object.__setattr__(self, "degrees", _freeze(degrees))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


@dataclass(frozen=True)
class LabelDistribution:
    """Dense N x C matrix of (possibly unnormalized) soft labels."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64, order="C")
        if matrix.ndim != 2:
            raise InputError(f"label distribution must be 2-D, got shape {matrix.shape}")
        if not np.isfinite(matrix).all():
            raise InputError("label distribution contains NaN or Inf entries")
        object.__setattr__(self, "matrix", _freeze(matrix))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ConfidenceVector:
    """Per-sample clean probabilities, each entry in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size < 1:
            raise InputError("confidence vector must be non-empty")
        if not np.isfinite(values).all():
            raise InputError("confidence vector contains NaN or Inf entries")
        if values.min() < 0.0 or values.max() > 1.0:
            raise InputError(
                f"confidence values must lie in [0, 1], got range "
                f"[{values.min()}, {values.max()}]"
            )
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n(self) -> int:
        return self.values.shape[0]
