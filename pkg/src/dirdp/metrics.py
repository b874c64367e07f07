"""Classification and image-quality metrics.

SSIM follows the standard single-scale formulation: 11x11 Gaussian
window with sigma 1.5, stability constants C1 = (0.01 R)^2 and
C2 = (0.03 R)^2 for data range R = 1, mean over valid window positions
and channels. Images smaller than the window fall back to a single
uniform window covering the whole image. Values are reported as-is
(they can be negative for anticorrelated patches).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_C1 = 0.01 ** 2
_C2 = 0.03 ** 2


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Top-1 accuracy; logits may already be hard predictions (1-D)."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    preds = logits if logits.ndim == 1 else np.argmax(logits, axis=1)
    if preds.shape != labels.shape:
        raise ValueError(f"prediction/label shapes differ: {preds.shape} vs {labels.shape}")
    return float(np.mean(preds == labels))


def top_k_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError("top_k_accuracy needs a (n, classes) logit matrix")
    if not 1 <= k <= logits.shape[1]:
        raise ValueError(f"k must be in [1, {logits.shape[1]}]")
    # stable sort so ties resolve to the lowest class index
    topk = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(topk == labels[:, None], axis=1)))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def _gaussian_window() -> np.ndarray:
    r = np.arange(_SSIM_WIN) - (_SSIM_WIN - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * _SSIM_SIGMA * _SSIM_SIGMA))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    h, w = a.shape
    if h < _SSIM_WIN or w < _SSIM_WIN:
        # one uniform window over the whole image
        mu1, mu2 = a.mean(), b.mean()
        s1 = a.var()
        s2 = b.var()
        cov = (a * b).mean() - mu1 * mu2
        num = (2 * mu1 * mu2 + _C1) * (2 * cov + _C2)
        den = (mu1 * mu1 + mu2 * mu2 + _C1) * (s1 + s2 + _C2)
        return float(num / den)
    k = _gaussian_window()
    axes = [(2, 3), (0, 1)]

    def smooth(img):
        win = sliding_window_view(img, (_SSIM_WIN, _SSIM_WIN))
        return np.tensordot(win, k, axes=axes)

    mu1, mu2 = smooth(a), smooth(b)
    s1 = smooth(a * a) - mu1 * mu1
    s2 = smooth(b * b) - mu2 * mu2
    cov = smooth(a * b) - mu1 * mu2
    num = (2 * mu1 * mu2 + _C1) * (2 * cov + _C2)
    den = (mu1 * mu1 + mu2 * mu2 + _C1) * (s1 + s2 + _C2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity for images in [0, 1], (H, W) or (H, W, C)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise ValueError("ssim expects (H, W) or (H, W, C) images")
    vals = [_ssim_channel(a[..., c], b[..., c]) for c in range(a.shape[2])]
    return float(np.mean(vals))


@dataclass(frozen=True)
class ScalarSummary:
    mean: float
    std: float
    min: float
    max: float
    count: int


def summarize_values(values) -> ScalarSummary:
    """Mean / sample std / extremes of a sequence of scalars."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty sequence")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return ScalarSummary(float(arr.mean()), std, float(arr.min()), float(arr.max()), int(arr.size))


@dataclass(frozen=True)
class MetricSummary:
    mean_ssim: float
    median_mse: float
    per_image: tuple


def summarize(per_image) -> MetricSummary:
    """Aggregate (ssim, mse) pairs per reconstructed image.

    MSE is summarized by its median: a single diverged reconstruction
    can push the mean arbitrarily high. Even counts take the mean of
    the two middle values.
    """
    pairs = tuple((float(s), float(m)) for s, m in per_image)
    if not pairs:
        raise ValueError("cannot summarize an empty sequence")
    ssims = np.array([p[0] for p in pairs])
    mses = np.array([p[1] for p in pairs])
    return MetricSummary(float(ssims.mean()), float(np.median(mses)), pairs)
