"""Generation-quality metrics: mean target similarity and Fréchet distance.

The Fréchet distance between Gaussian fits (m1, C1), (m2, C2) is

    ||m1 - m2||^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2))

computed here with population covariances and the trace term evaluated as
Tr((sqrt(C1) C2 sqrt(C1))^(1/2)) so only symmetric eigendecompositions are
needed. Eigenvalues within -1e-8 of zero are treated as rounding noise and
clamped; anything more negative is a genuine input defect and raises.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import as_embedding, cosine_similarity
from .errors import (
    DimensionError,
    EmptyInputError,
    InsufficientSamplesError,
    NumericalError,
    ValidationError,
)

__all__ = ["GaussianStats", "clip_i", "as_feature_set", "fit_gaussian", "frechet_distance"]

_EIG_NOISE_FLOOR = -1e-8
_SYMMETRY_TOL = 1e-9


def as_feature_set(vectors: Sequence) -> np.ndarray:
    """Stack embeddings into an (N, D) float64 matrix, enforcing uniform dim."""
    if len(vectors) == 0:
        raise EmptyInputError("feature set must not be empty")
    rows = [as_embedding(v) for v in vectors]
    dim = rows[0].size
    for i, row in enumerate(rows):
        if row.size != dim:
            raise DimensionError(f"feature set mixes dims: vector {i} has {row.size}, expected {dim}")
    return np.stack(rows)


def clip_i(target, generated: Sequence) -> float:
    """Mean cosine similarity between the target embedding and each sample."""
    t = as_embedding(target)
    mat = as_feature_set(generated)
    sims = [cosine_similarity(t, row) for row in mat]
    return float(np.mean(sims))


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionError(f"mean {mean.shape} and covariance {cov.shape} do not agree")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("Gaussian statistics contain non-finite entries")
        if np.max(np.abs(cov - cov.T), initial=0.0) > _SYMMETRY_TOL:
            raise ValidationError("covariance is not symmetric within 1e-9")
        if np.any(np.diag(cov) < 0):
            raise ValidationError("covariance has negative diagonal entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def fit_gaussian(vectors: Sequence) -> GaussianStats:
    """Sample mean and population covariance (divide by N), symmetrized.

    One sample cannot define a spread, so N < 2 raises rather than returning
    a deceptive zero-covariance fit.
    """
    mat = as_feature_set(vectors)
    if mat.shape[0] < 2:
        raise InsufficientSamplesError(
            f"need at least 2 samples to fit a Gaussian, got {mat.shape[0]}"
        )
    mean = mat.mean(axis=0)
    centered = mat - mean
    cov = (centered.T @ centered) / mat.shape[0]
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, covariance=cov)


def _clamped_eigvals(values: np.ndarray, what: str) -> np.ndarray:
    low = float(values.min(initial=0.0))
    if low < _EIG_NOISE_FLOOR:
        raise NumericalError(f"{what} has eigenvalue {low}, below the -1e-8 noise floor")
    return np.maximum(values, 0.0)


def frechet_distance(g1: GaussianStats, g2: GaussianStats) -> float:
    """Fréchet distance between two Gaussian fits (see module docstring)."""
    if g1.dim != g2.dim:
        raise DimensionError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    mean_term = float(np.sum((g1.mean - g2.mean) ** 2))

    w1, v1 = np.linalg.eigh(g1.covariance)
    w1 = _clamped_eigvals(w1, "first covariance")
    sqrt1 = (v1 * np.sqrt(w1)) @ v1.T

    inner = sqrt1 @ g2.covariance @ sqrt1
    inner = (inner + inner.T) / 2.0
    wi = _clamped_eigvals(np.linalg.eigvalsh(inner), "covariance product")
    trace_sqrt = float(np.sum(np.sqrt(wi)))

    value = mean_term + float(np.trace(g1.covariance) + np.trace(g2.covariance)) - 2.0 * trace_sqrt
    return max(0.0, value)
