import gzip
import struct

import numpy as np
import pytest


def write_idx_images(path, images: np.ndarray, magic: int = 0x00000803,
                     compress: bool = False) -> None:
    """Serialize a (n, rows, cols) uint8 array in IDX3 layout."""
    n, rows, cols = images.shape
    payload = struct.pack(">IIII", magic, n, rows, cols) + images.astype(np.uint8).tobytes()
    opener = gzip.open if compress else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def write_idx_labels(path, labels: np.ndarray, magic: int = 0x00000801,
                     compress: bool = False) -> None:
    payload = struct.pack(">II", magic, labels.shape[0]) + labels.astype(np.uint8).tobytes()
    opener = gzip.open if compress else open
    with opener(path, "wb") as fh:
        fh.write(payload)


@pytest.fixture
def idx_pair(tmp_path):
    """Small valid IDX image/label file pair plus the raw arrays."""
    gen = np.random.default_rng(99)
    images = gen.integers(0, 256, size=(12, 8, 8), dtype=np.uint8)
    labels = (np.arange(12) % 10).astype(np.uint8)
    ip = tmp_path / "images.idx"
    lp = tmp_path / "labels.idx"
    write_idx_images(ip, images)
    write_idx_labels(lp, labels)
    return ip, lp, images, labels
