"""
Principal component analysis by eigen-decomposition of the sample covariance.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from utils.errors import DataError

DEGENERATE_VARIANCE = 1e-12


@dataclass
class PCAModel:
    """Fitted components; rows of `components` are orthonormal."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    degenerate: bool = False

    @property
    def explained_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def project(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components.T

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        """Map projections back to centred feature space."""
        return np.asarray(projected) @ self.components


def fit_pca(data: np.ndarray, k: int) -> PCAModel:
    """
    Fit k principal components.

    Eigenvectors are sorted by decreasing eigenvalue and signed so that the
    largest-magnitude loading of each component is positive.

    Args:
        data: (T, D) observations
        k: Number of components, 1 <= k <= min(T, D)

    Returns:
        PCAModel
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DataError(f"PCA expects a (steps, features) array, got shape {data.shape}")
    steps, dims = data.shape
    if k < 1 or k > steps or k > dims:
        raise DataError(f"PCA needs 1 <= k <= min(steps, features); got k={k}, shape {data.shape}")

    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / max(steps - 1, 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(dims)])
    signs[signs == 0] = 1.0
    eigenvectors = eigenvectors * signs

    total = float(eigenvalues.sum())
    degenerate = total < DEGENERATE_VARIANCE
    if degenerate:
        print("[Analysis] Constant trace: PCA components are arbitrary")
        eigenvectors = np.eye(dims)
        eigenvalues = np.zeros(dims)
    return PCAModel(
        mean=mean,
        components=eigenvectors[:, :k].T.copy(),
        explained_variance=eigenvalues[:k].copy(),
        total_variance=total,
        degenerate=degenerate,
    )


def pca(data: np.ndarray, k: int) -> Tuple[PCAModel, np.ndarray]:
    """Fit k components and project the data onto them."""
    model = fit_pca(data, k)
    return model, model.project(data)
