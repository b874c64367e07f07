# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution and pooling kernels.

Same contracts as _kernels_py; see that module for the layout notes.
Plain typed loops, no threading, so results are reproducible run to run.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def conv2d_fwd(x, w, b):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef double[::1] bv = b
    cdef Py_ssize_t N = xv.shape[0], H = xv.shape[1], W = xv.shape[2], CI = xv.shape[3]
    cdef Py_ssize_t KH = wv.shape[0], KW = wv.shape[1], CO = wv.shape[3]
    cdef Py_ssize_t HO = H - KH + 1, WO = W - KW + 1
    y = np.empty((N, HO, WO, CO), dtype=np.float64)
    cdef double[:, :, :, ::1] yv = y
    cdef Py_ssize_t n, oh, ow, ki, kj, ci, co
    cdef double xval
    for n in range(N):
        for oh in range(HO):
            for ow in range(WO):
                for co in range(CO):
                    yv[n, oh, ow, co] = bv[co]
                for ki in range(KH):
                    for kj in range(KW):
                        for ci in range(CI):
                            xval = xv[n, oh + ki, ow + kj, ci]
                            for co in range(CO):
                                yv[n, oh, ow, co] += xval * wv[ki, kj, ci, co]
    return y


def conv2d_bwd(x, w, gy):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef double[:, :, :, ::1] gyv = gy
    cdef Py_ssize_t N = xv.shape[0], H = xv.shape[1], W = xv.shape[2], CI = xv.shape[3]
    cdef Py_ssize_t KH = wv.shape[0], KW = wv.shape[1], CO = wv.shape[3]
    cdef Py_ssize_t HO = H - KH + 1, WO = W - KW + 1
    gx = np.zeros((N, H, W, CI), dtype=np.float64)
    gw = np.zeros((KH, KW, CI, CO), dtype=np.float64)
    gb = np.zeros(CO, dtype=np.float64)
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, :, :, ::1] gwv = gw
    cdef double[::1] gbv = gb
    cdef Py_ssize_t n, oh, ow, ki, kj, ci, co
    cdef double g
    for n in range(N):
        for oh in range(HO):
            for ow in range(WO):
                for co in range(CO):
                    gbv[co] += gyv[n, oh, ow, co]
                for ki in range(KH):
                    for kj in range(KW):
                        for ci in range(CI):
                            g = 0.0
                            for co in range(CO):
                                g += wv[ki, kj, ci, co] * gyv[n, oh, ow, co]
                                gwv[ki, kj, ci, co] += xv[n, oh + ki, ow + kj, ci] * gyv[n, oh, ow, co]
                            gxv[n, oh + ki, ow + kj, ci] += g
    return gx, gw, gb


def avgpool2_fwd(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef Py_ssize_t N = xv.shape[0], H = xv.shape[1], W = xv.shape[2], C = xv.shape[3]
    if H % 2 or W % 2:
        raise ValueError(f"avgpool2 needs even spatial dims, got {H}x{W}")
    y = np.empty((N, H // 2, W // 2, C), dtype=np.float64)
    cdef double[:, :, :, ::1] yv = y
    cdef Py_ssize_t n, oh, ow, c
    for n in range(N):
        for oh in range(H // 2):
            for ow in range(W // 2):
                for c in range(C):
                    yv[n, oh, ow, c] = 0.25 * (
                        xv[n, 2 * oh, 2 * ow, c]
                        + xv[n, 2 * oh, 2 * ow + 1, c]
                        + xv[n, 2 * oh + 1, 2 * ow, c]
                        + xv[n, 2 * oh + 1, 2 * ow + 1, c]
                    )
    return y


def avgpool2_bwd(gy):
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, :, :, ::1] gyv = gy
    cdef Py_ssize_t N = gyv.shape[0], HO = gyv.shape[1], WO = gyv.shape[2], C = gyv.shape[3]
    gx = np.empty((N, 2 * HO, 2 * WO, C), dtype=np.float64)
    cdef double[:, :, :, ::1] gxv = gx
    cdef Py_ssize_t n, oh, ow, c
    cdef double g
    for n in range(N):
        for oh in range(HO):
            for ow in range(WO):
                for c in range(C):
                    g = 0.25 * gyv[n, oh, ow, c]
                    gxv[n, 2 * oh, 2 * ow, c] = g
                    gxv[n, 2 * oh, 2 * ow + 1, c] = g
                    gxv[n, 2 * oh + 1, 2 * ow, c] = g
                    gxv[n, 2 * oh + 1, 2 * ow + 1, c] = g
    return gx
