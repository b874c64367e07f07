"""Dataset ingestion: MNIST-style IDX files and a synthetic generator.

IDX is the classic big-endian binary layout: magic 0x00000803 for image
tensors (count, rows, cols, then uint8 pixels) and 0x00000801 for label
vectors. Files may be gzip-compressed (detected by suffix). Pixels are
scaled to [0, 1]; an optional area-average downscale preserves the mean
exactly, so resized images stay comparable across sizes.

The synthetic generator is the offline stand-in: one oriented grating
template per class, labels assigned round-robin, with a contrast knob
blending template against uniform noise. At contrast 1.0 the classes
are exactly linearly separable.
"""

from __future__ import annotations

import gzip
import struct

import numpy as np

from .mechanisms import RngStream

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801


class DataError(Exception):
    """Malformed or inconsistent dataset input."""


def _open_maybe_gzip(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n: int, path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"{path}: truncated file while reading {what} "
                        f"(wanted {n} bytes, got {len(buf)})")
    return buf


def load_idx_images(path) -> np.ndarray:
    """uint8 image tensor from an IDX3 file, shape (n, rows, cols)."""
    with _open_maybe_gzip(path) as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, path, "header"))
        if magic != _IMAGE_MAGIC:
            raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x{_IMAGE_MAGIC:08x}")
        raw = _read_exact(fh, count * rows * cols, path, f"{count} images")
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    """uint8 label vector from an IDX1 file, shape (n,)."""
    with _open_maybe_gzip(path) as fh:
        magic, count = struct.unpack(">II", _read_exact(fh, 8, path, "header"))
        if magic != _LABEL_MAGIC:
            raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x{_LABEL_MAGIC:08x}")
        raw = _read_exact(fh, count, path, f"{count} labels")
    return np.frombuffer(raw, dtype=np.uint8).copy()


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix of cell-overlap fractions."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo, hi = o * scale, (o + 1) * scale
        for i in range(int(np.floor(lo)), min(n_in, int(np.ceil(hi)))):
            w[o, i] = max(0.0, min(hi, i + 1.0) - max(lo, i)) / scale
    return w


def area_resize(images: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Mean-preserving area-average resize of (n, H, W[, C]) images."""
    images = np.asarray(images, dtype=np.float64)
    squeeze = images.ndim == 3
    if squeeze:
        images = images[..., None]
    wh = _overlap_weights(images.shape[1], out_h)
    ww = _overlap_weights(images.shape[2], out_w)
    out = np.einsum("oi,nijc,pj->nopc", wh, images, ww, optimize=True)
    return out[..., 0] if squeeze else out


def load_mnist_idx(images_path, labels_path, limit: int | None = None,
                   resize_to: int | None = None):
    """Images in [0,1] with shape (n, H, W, 1) plus int labels.

    Raises DataError on bad magic numbers, truncation, or when the two
    files disagree about the example count.
    """
    imgs = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if imgs.shape[0] != labels.shape[0]:
        raise DataError(f"count mismatch: {images_path} has {imgs.shape[0]} images "
                        f"but {labels_path} has {labels.shape[0]} labels")
    if limit is not None:
        if limit < 1 or limit > imgs.shape[0]:
            raise DataError(f"limit {limit} out of range for {imgs.shape[0]} examples")
        imgs, labels = imgs[:limit], labels[:limit]
    x = imgs.astype(np.float64) / 255.0
    if resize_to is not None:
        x = area_resize(x, resize_to, resize_to)
    return x[..., None], labels.astype(np.int64)


def _class_templates(classes: int, size: int, channels: int) -> np.ndarray:
    """One oriented grating per class: distinct angle, frequency, phase.

    Gratings carry high-frequency structure, so a smooth blob (the
    typical artifact of a failed reconstruction) scores near-zero SSIM
    against every class; smooth templates would not give that contrast.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.empty((classes, size, size, channels))
    for c in range(classes):
        tpl = np.empty((size, size, channels))
        for ch in range(channels):
            ang = np.pi * (c + ch / max(1, channels) / 2.0) / classes
            freq = 2.0 + 1.5 * (c % 3)  # cycles across the image
            phase = 2.0 * np.pi * c / max(1, classes)
            proj = (np.cos(ang) * xx + np.sin(ang) * yy) / max(size - 1, 1)
            tpl[..., ch] = 0.5 + 0.45 * np.sin(2.0 * np.pi * freq * proj + phase)
        out[c] = tpl
    return out


def synth_dataset(n: int, classes: int, image_size: int, seed: int,
                  channels: int = 1, contrast: float = 0.8):
    """Seeded synthetic classification set: (x (n,H,W,C) in [0,1], y (n,)).

    Labels are round-robin, so class counts are balanced within one.
    contrast in (0, 1] mixes the class template with uniform noise.
    """
    if classes < 2:
        raise DataError("synthetic dataset needs at least 2 classes")
    if not 0.0 < contrast <= 1.0:
        raise DataError("contrast must be in (0, 1]")
    if n < 1 or image_size < 2:
        raise DataError("need n >= 1 and image_size >= 2")
    labels = np.arange(n, dtype=np.int64) % classes
    templates = _class_templates(classes, image_size, channels)
    gen = RngStream(seed).generator()
    noise = gen.random((n, image_size, image_size, channels))
    x = contrast * templates[labels] + (1.0 - contrast) * noise
    return np.clip(x, 0.0, 1.0), labels
