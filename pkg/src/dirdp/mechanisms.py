"""Noise mechanisms: von Mises-Fisher direction noise and Gaussian noise.

The VMF sampler uses the tangent-normal decomposition: the scalar
component w along the pole is drawn by Wood's rejection scheme, a
uniform tangent direction is drawn orthogonal to the pole, and the
composed sample is reflected from the canonical pole onto the requested
mean direction. Cost is O(dim) per accepted sample; all rejection
intermediates are kept in log space so concentrations up to several
hundred thousand stay finite.

Randomness is counter-based: an :class:`RngStream` is a (seed, counter)
pair, and identical pairs yield identical sample sequences regardless of
platform or thread schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import angular_distance, pole_rotation_apply

_MASK64 = (1 << 64) - 1
_W_CHUNK = 16


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by (seed, counter)."""

    seed: int
    counter: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator; same (seed, counter) always yields the same draws."""
        ss = np.random.SeedSequence(entropy=(self.seed & _MASK64, self.counter & _MASK64))
        return np.random.Generator(np.random.PCG64(ss))

    def with_counter(self, counter: int) -> "RngStream":
        return RngStream(self.seed, counter)


@dataclass(frozen=True)
class VmfParams:
    """Concentration (privacy parameter) and ambient dimension."""

    epsilon_v: float
    dim: int

    def __post_init__(self):
        if not self.epsilon_v > 0:
            raise ValueError("epsilon_v must be positive")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")


@dataclass(frozen=True)
class GaussParams:
    """Per-coordinate Gaussian noise scale."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def _wood_envelope(kappa: float, dim: int):
    """Envelope constants (b, x0, c) for Wood's rejection scheme.

    b is computed in the cancellation-free form dim / (sqrt(4k^2 + dim^2)
    + 2k), algebraically equal to the textbook (-2k + sqrt(...)) / dim.
    """
    m = dim - 1  # tangent dimension
    b = m / (np.sqrt(4.0 * kappa * kappa + m * m) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * np.log1p(-x0 * x0)
    return b, x0, c, m


def _sample_w_many(kappa: float, dim: int, gen: np.random.Generator, n: int) -> np.ndarray:
    """Draw n scalar pole components w with density prop. to
    exp(kappa*w) * (1-w^2)^((dim-3)/2) on [-1, 1]."""
    b, x0, c, m = _wood_envelope(kappa, dim)
    out = np.empty(n, dtype=np.float64)
    filled = 0
    while filled < n:
        todo = max(n - filled, _W_CHUNK)
        z = gen.beta(m / 2.0, m / 2.0, size=todo)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = 1.0 - gen.random(todo)  # in (0, 1], keeps log finite
        accept = kappa * w + m * np.log1p(-x0 * w) - c >= np.log(u)
        got = w[accept]
        take = min(got.size, n - filled)
        out[filled:filled + take] = got[:take]
        filled += take
    return out


def _tangent_directions(dim: int, gen: np.random.Generator, n: int) -> np.ndarray:
    """n uniform unit directions orthogonal to the canonical pole e1."""
    v = gen.standard_normal((n, dim))
    v[:, 0] = 0.0
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        v[bad] = gen.standard_normal((int(bad.sum()), dim))
        v[bad, 0] = 0.0
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def _as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or a live numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def vmf_sample_batch(params: VmfParams, mu: np.ndarray, rng, n: int) -> np.ndarray:
    """Draw n VMF samples about mu; rows are unit vectors, shape (n, dim)."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (params.dim,):
        raise ValueError(f"mu has dimension {mu.shape}, expected ({params.dim},)")
    gen = _as_generator(rng)
    w = _sample_w_many(params.epsilon_v, params.dim, gen, n)
    v = _tangent_directions(params.dim, gen, n)
    x = np.sqrt(np.maximum(0.0, 1.0 - w * w))[:, None] * v
    x[:, 0] += w
    # reflect the pole onto mu (same Householder for every row)
    u = -mu.copy()
    u[0] += 1.0
    nu = np.linalg.norm(u)
    if nu >= 1e-12:
        u /= nu
        x -= 2.0 * (x @ u)[:, None] * u[None, :]
    return x


def vmf_sample(params: VmfParams, mu: np.ndarray, rng) -> np.ndarray:
    """Single VMF draw about mean direction mu."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (params.dim,):
        raise ValueError(f"mu has dimension {mu.shape}, expected ({params.dim},)")
    gen = _as_generator(rng)
    w = float(_sample_w_many(params.epsilon_v, params.dim, gen, 1)[0])
    v = _tangent_directions(params.dim, gen, 1)[0]
    x = np.sqrt(max(0.0, 1.0 - w * w)) * v
    x[0] += w
    return pole_rotation_apply(mu, x)


def vmf_unnormalized_log_density(params: VmfParams, mu: np.ndarray, x: np.ndarray) -> float:
    """log density up to the normalizer: epsilon_v * <mu, x>."""
    return params.epsilon_v * float(np.dot(mu, x))


def gaussian_perturb(params: GaussParams, g: np.ndarray, rng) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise to every coordinate of g."""
    g = np.asarray(g, dtype=np.float64)
    if params.sigma == 0.0:
        return g.copy()
    return g + params.sigma * _as_generator(rng).standard_normal(g.shape)


def privacy_bound_gap(params: VmfParams, mu1: np.ndarray, mu2: np.ndarray, x: np.ndarray) -> float:
    """Log-density difference minus the angular-distance privacy budget.

    Returns eps*(mu1 - mu2)^T x - eps*d(mu1, mu2), which is <= 0 for all
    unit inputs: the chord length ||mu1 - mu2|| never exceeds the arc.
    """
    eps = params.epsilon_v
    gap = eps * float(np.dot(mu1 - mu2, x)) - eps * angular_distance(mu1, mu2)
    return gap
