"""Principal component analysis for shrinking embeddings before graph build.

Exact eigendecomposition of the sample covariance; the N x N Gram matrix is
used instead when N < d. Desk-scale sizes keep both paths cheap, so there is
no randomized or streaming variant.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import dataio
from .core import FeatureMatrix
from .errors import InputError

__all__ = ["PcaModel", "pca_fit", "pca_transform", "save_pca_model", "load_pca_model"]


@dataclass(frozen=True)
class PcaModel:
    """Fitted projection: mean vector, orthonormal component rows (m x d),
    and non-increasing explained variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        components = np.asarray(self.components, dtype=np.float64)
        variance = np.asarray(self.explained_variance, dtype=np.float64).ravel()
        if components.ndim != 2:
            raise InputError(f"components must be 2-D, got shape {components.shape}")
        if components.shape[1] != mean.shape[0]:
            raise InputError("components width does not match mean length")
        if variance.shape[0] != components.shape[0]:
            raise InputError("one explained variance per component required")
        if np.any(np.diff(variance) > 1e-9):
            raise InputError("explained variances must be non-increasing")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "explained_variance", np.maximum(variance, 0.0))

    @property
    def output_dim(self) -> int:
        return self.components.shape[0]


def _fix_signs(components):
    # Deterministic orientation: the largest-magnitude entry of each row is positive.
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return components


def pca_fit(features, m=None) -> PcaModel:
    """Fit the top-m principal directions of the sample covariance (1/(N-1)).

    m=None selects the default min(64, d), capped at the sample count.
    """
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix(features)
    X = features.data
    n, d = X.shape
    m = min(64, n, d) if m is None else int(m)
    if not 1 <= m <= min(n, d):
        raise InputError(f"m must lie in [1, min(N, d)] = [1, {min(n, d)}], got {m}")
    mean = X.mean(axis=0)
    centered = X - mean
    denom = max(n - 1, 1)
    if n >= d:
        cov = (centered.T @ centered) / denom
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        order = np.argsort(eigenvalues)[::-1][:m]
        variance = eigenvalues[order]
        components = eigenvectors[:, order].T.copy()
    else:
        # Gram trick: eigenvectors of X Xt / (N-1) map to covariance eigenvectors.
        gram = (centered @ centered.T) / denom
        eigenvalues, eigenvectors = np.linalg.eigh(gram)
        order = np.argsort(eigenvalues)[::-1][:m]
        variance = eigenvalues[order]
        mapped = centered.T @ eigenvectors[:, order]
        norms = np.linalg.norm(mapped, axis=0)
        if np.any(norms == 0):
            raise InputError("requested more components than the data's rank supports")
        components = (mapped / norms).T.copy()
    components = _fix_signs(components)
    return PcaModel(mean=mean, components=components, explained_variance=variance)


def pca_transform(model: PcaModel, features) -> FeatureMatrix:
    """Project features onto the fitted components: (X - mean) @ components.T."""
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix(features)
    if features.d != model.mean.shape[0]:
        raise InputError(
            f"features have dimension {features.d} but the model was fit on {model.mean.shape[0]}"
        )
    return FeatureMatrix((features.data - model.mean) @ model.components.T)


def save_pca_model(model: PcaModel, path) -> None:
    """Persist components in the .lcf matrix format with a JSON sidecar."""
    dataio.write_embeddings(path, FeatureMatrix(model.components))
    sidecar = {
        "mean": model.mean.tolist(),
        "explained_variance": model.explained_variance.tolist(),
    }
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_pca_model(path) -> PcaModel:
    components = dataio.read_embeddings(path).data
    with open(f"{path}.json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    return PcaModel(
        mean=np.asarray(sidecar["mean"], dtype=np.float64),
        components=components,
        explained_variance=np.asarray(sidecar["explained_variance"], dtype=np.float64),
    )
