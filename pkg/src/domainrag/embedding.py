"""Embedding similarity, style descriptors, and prompt fusion.

All math runs in float64. Vectors are plain 1-D numpy arrays; feature maps
are (C, H, W) arrays; a style vector for C channels is the length-2C array
[mean_1..mean_C, std_1..std_C] with population (divide-by-HW) stds.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateVectorError, DimensionError, EmptyInputError, ValidationError

__all__ = [
    "FusionWeights",
    "as_embedding",
    "as_feature_map",
    "as_style_vector",
    "cosine_similarity",
    "style_vector",
    "style_distance",
    "fuse",
]


@dataclass(frozen=True)
class FusionWeights:
    """Nonnegative weights for blending the query and retrieved prompts."""

    lambda1: float
    lambda2: float

    def __post_init__(self):
        for name, v in (("lambda1", self.lambda1), ("lambda2", self.lambda2)):
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v!r}")


def as_embedding(values) -> np.ndarray:
    """Validate and return a 1-D float64 embedding (finite, dim >= 1)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"embedding must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("embedding contains non-finite entries")
    return arr


def as_feature_map(values) -> np.ndarray:
    """Validate and return a (C, H, W) float64 feature map."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"feature map must be (C, H, W), got shape {arr.shape}")
    if arr.shape[1] * arr.shape[2] < 1 or arr.shape[0] < 1:
        raise EmptyInputError(f"feature map has an empty axis: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("feature map contains non-finite entries")
    return arr


def as_style_vector(values) -> np.ndarray:
    """Validate a style vector: even length, finite, std half nonnegative."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2 or arr.size % 2 != 0:
        raise DimensionError(f"style vector must be a 1-D vector of even length, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("style vector contains non-finite entries")
    if np.any(arr[arr.size // 2 :] < 0):
        raise ValidationError("style vector std entries must be >= 0")
    return arr


def cosine_similarity(a, b) -> float:
    """Cosine similarity <a,b> / (|a||b|), clamped to [-1, 1].

    Zero-norm inputs are rejected rather than mapped to 0: they mean an
    upstream encoder failed and must not silently rank last.
    """
    va = as_embedding(a)
    vb = as_embedding(b)
    if va.size != vb.size:
        raise DimensionError(f"dimension mismatch: {va.size} vs {vb.size}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity undefined for zero-norm vectors")
    sim = float(va @ vb) / (na * nb)
    return min(1.0, max(-1.0, sim))


def style_vector(feature_map) -> np.ndarray:
    """Channel-wise spatial mean/std descriptor of a (C, H, W) feature map.

    Layout is [means..., stds...] so C channels yield a 2C vector.
    """
    fmap = as_feature_map(feature_map)
    return kernels.channel_stats(np.ascontiguousarray(fmap))


def style_distance(s1, s2) -> float:
    """L2 norm between two style vectors."""
    v1 = as_style_vector(s1)
    v2 = as_style_vector(s2)
    if v1.size != v2.size:
        raise DimensionError(f"style length mismatch: {v1.size} vs {v2.size}")
    return float(np.linalg.norm(v1 - v2))


def fuse(query_embedding, retrieved_embedding, weights: FusionWeights) -> np.ndarray:
    """Weighted sum lambda1*query + lambda2*retrieved, elementwise."""
    q = as_embedding(query_embedding)
    r = as_embedding(retrieved_embedding)
    if q.size != r.size:
        raise DimensionError(f"dimension mismatch: {q.size} vs {r.size}")
    return weights.lambda1 * q + weights.lambda2 * r
