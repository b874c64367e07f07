"""Pure-numpy convolution and pooling kernels.

Reference implementation of the hot-path array ops; the compiled
backend in _kernels_cy must match these signatures and results.
Layouts: images are (N, H, W, C), filters are (KH, KW, Cin, Cout),
valid (no padding) cross-correlation, stride 1.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"


def conv2d_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    kh, kw = w.shape[0], w.shape[1]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (N, Ho, Wo, Cin, kh, kw)
    y = np.tensordot(win, w, axes=[(4, 5, 3), (0, 1, 2)])
    return y + b


def conv2d_bwd(x: np.ndarray, w: np.ndarray, gy: np.ndarray):
    """Gradients of a scalar loss wrt (x, w, b) given gy = dL/dy."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    kh, kw = w.shape[0], w.shape[1]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    gw = np.tensordot(win, gy, axes=[(0, 1, 2), (0, 1, 2)])  # (Cin, kh, kw, Cout)
    gw = np.ascontiguousarray(gw.transpose(1, 2, 0, 3))
    gb = gy.sum(axis=(0, 1, 2))
    gyp = np.pad(gy, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    wing = sliding_window_view(gyp, (kh, kw), axis=(1, 2))  # (N, H, W, Cout, kh, kw)
    wflip = w[::-1, ::-1]
    gx = np.tensordot(wing, wflip, axes=[(4, 5, 3), (0, 1, 3)])
    return np.ascontiguousarray(gx), gw, np.ascontiguousarray(gb)


def avgpool2_fwd(x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    return x.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


def avgpool2_bwd(gy: np.ndarray) -> np.ndarray:
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    return np.repeat(np.repeat(gy, 2, axis=1), 2, axis=2) * 0.25
