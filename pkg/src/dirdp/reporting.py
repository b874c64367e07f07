"""Result persistence: PGM images, CSV tables, JSON-lines traces.

Byte-level formats:

* PGM: binary P5, header ``P5\\n<width> <height>\\n255\\n`` then
  row-major uint8 pixels; floats in [0,1] are scaled by 255 and rounded
  to nearest.
* CSV: comma-separated, one header row; floats serialized with 17
  significant digits (%.17g) so parsing them back is exact.
* JSON lines: one compact JSON object per line, keys sorted.

All writers go through an atomic replace so concurrent runs never see
half-written files.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np


def format_float(x: float) -> str:
    """Decimal form that round-trips float64 exactly."""
    return "%.17g" % x


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _atomic_write_bytes(path, payload: bytes) -> None:
    path = str(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_pgm(path, img: np.ndarray) -> None:
    """Binary P5 greyscale; img is (H, W) or (H, W, 1) floats in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim != 2:
        raise ValueError(f"save_pgm needs a single-channel image, got shape {img.shape}")
    pix = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    _atomic_write_bytes(path, header + pix.tobytes())


def load_pgm(path) -> np.ndarray:
    """(H, W) float64 image in [0, 1] from a binary P5 file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    # header: magic, width, height, maxval as whitespace-separated tokens
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=pos)
    return data.reshape(h, w).astype(np.float64) / float(maxval)


def image_strip(images, pad: int = 1) -> np.ndarray:
    """Concatenate same-size greyscale images horizontally, white gaps."""
    imgs = [np.asarray(im, dtype=np.float64).reshape(im.shape[0], -1) if im.ndim == 3 and im.shape[2] == 1
            else np.asarray(im, dtype=np.float64) for im in images]
    h = imgs[0].shape[0]
    gap = np.ones((h, pad))
    parts = []
    for i, im in enumerate(imgs):
        if im.shape[0] != h:
            raise ValueError("all strip images must share a height")
        if i:
            parts.append(gap)
        parts.append(np.clip(im, 0.0, 1.0))
    return np.concatenate(parts, axis=1)


def write_csv(path, header: list, rows: list) -> None:
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        lines.append(",".join(_format_cell(v) for v in row))
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_csv(path):
    """(header, rows) with every cell still a string."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=_json_default)


def write_jsonl(path, records) -> None:
    payload = "".join(json_line(r) + "\n" for r in records)
    _atomic_write_bytes(path, payload.encode("utf-8"))


def read_jsonl(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def write_json(path, obj) -> None:
    payload = json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"
    _atomic_write_bytes(path, payload.encode("utf-8"))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
