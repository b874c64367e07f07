"""Dense numeric primitives shared by every other module.

Two array conventions are used throughout the package:

* flat vector: 1-D float64 ndarray, used for flattened gradients and
  parameter vectors.
* image: (H, W, C) float64 ndarray, row-major, channel-last, values in
  [0, 1] after any projection step.

All numerics are 64-bit. Gradient flattening order is layer by layer in
declaration order, weights before biases; see ``dirdp.nets``.
"""

from __future__ import annotations

import numpy as np


def as_flat(data, copy: bool = False) -> np.ndarray:
    """Coerce to a 1-D float64 vector, rejecting NaN/Inf entries."""
    v = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        v = v.reshape(-1)
    if v.size == 0:
        raise ValueError("flat vector must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ValueError("flat vector contains non-finite entries")
    return v


def as_image(data, height: int, width: int, channels: int = 1) -> np.ndarray:
    """Coerce to an (H, W, C) float64 image with entries in [0, 1]."""
    img = np.asarray(data, dtype=np.float64).reshape(height, width, channels)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image entries must lie in [0, 1]")
    return img


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product of two equal-length flat vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def l2_norm(a: np.ndarray) -> float:
    """Euclidean norm of a flat vector."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def vector_mean(vs) -> np.ndarray:
    """Componentwise mean of a non-empty list of equal-length vectors."""
    if len(vs) == 0:
        raise ValueError("cannot average an empty list of vectors")
    stack = np.asarray(vs, dtype=np.float64)
    if stack.ndim != 2:
        raise ValueError("vectors must all have the same length")
    return stack.mean(axis=0)
