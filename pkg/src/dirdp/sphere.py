"""Unit-sphere geometry: normalization, angular distance, pole rotations.

Angular distance is defined on unit vectors as arccos of the (clamped)
inner product, which makes it a proper metric on the sphere. The pole
rotation maps samples drawn about the canonical first basis vector onto
an arbitrary mean direction in O(K) via a Householder reflection.
"""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-9


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||. Raises on (numerically) zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-300 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero-norm vector")
    return v / n


def is_unit(v: np.ndarray, tol: float = UNIT_TOL) -> bool:
    return abs(np.linalg.norm(v) - 1.0) <= tol


def angular_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi] between two unit vectors.

    The inner product is clamped to [-1, 1] so rounding at 1 + 1e-16
    can never produce NaN.
    """
    c = float(np.dot(a, b))
    return float(np.arccos(min(1.0, max(-1.0, c))))


def pole_rotation_apply(mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply an orthogonal map Q with Q e1 = mu to the unit vector x.

    Q is the Householder reflection through the bisector of e1 and mu,
    applied in O(K) without materializing the matrix. When mu is
    (numerically) e1 the map is the identity.
    """
    mu = np.asarray(mu, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if mu.shape != x.shape:
        raise ValueError(f"dimension mismatch: {mu.shape} vs {x.shape}")
    u = -mu.copy()
    u[0] += 1.0  # u = e1 - mu
    nu = np.linalg.norm(u)
    if nu < 1e-12:
        return x.copy()
    u /= nu
    return x - 2.0 * np.dot(u, x) * u


def random_unit(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random direction on the (dim-1)-sphere."""
    if dim < 1:
        raise ValueError("dim must be positive")
    while True:
        g = rng.standard_normal(dim)
        n = np.linalg.norm(g)
        if n > 1e-12:
            return g / n
