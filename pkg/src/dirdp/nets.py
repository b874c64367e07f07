"""Small feedforward classifiers with hand-rolled backprop.

Two architectures:

* ``mlp``: one tanh hidden layer, then a linear readout.
* ``lenet``: 5x5 valid conv (6 ch) -> sigmoid -> 2x2 mean pool ->
  5x5 valid conv (12 ch) -> sigmoid -> 2x2 mean pool -> linear readout.

Parameters live in a :class:`NetworkParams`: named float64 tensors in a
fixed insertion order. ``flatten`` concatenates the tensors in that
order, each raveled C-style, which defines the single flat-vector
layout used everywhere else (clipping, noise, checkpoints, attacks).

Losses are softmax cross-entropy. ``loss_and_grad`` averages over the
batch; per-example variants do not average.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import backend
from .mechanisms import RngStream

_MAGIC = "dirdp-net v1"


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class NetworkParams:
    """Named parameter tensors plus the architecture they belong to."""

    arch: str
    meta: dict
    tensors: dict[str, np.ndarray]

    def names(self) -> list[str]:
        return list(self.tensors)

    def param_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def unflatten(self, flat: np.ndarray) -> "NetworkParams":
        """New NetworkParams with the same shapes, values taken from flat."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.param_count(),):
            raise ValueError(f"expected {self.param_count()} values, got {flat.shape}")
        out, pos = {}, 0
        for name, t in self.tensors.items():
            out[name] = flat[pos:pos + t.size].reshape(t.shape).copy()
            pos += t.size
        return NetworkParams(self.arch, dict(self.meta), out)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, dict(self.meta), {k: v.copy() for k, v in self.tensors.items()})

    def slices(self) -> dict[str, slice]:
        """Flat-vector extent of each named tensor, in flatten order."""
        out, pos = {}, 0
        for name, t in self.tensors.items():
            out[name] = slice(pos, pos + t.size)
            pos += t.size
        return out


def _uniform_init(gen: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return gen.uniform(-bound, bound, size=shape)


def init_mlp(input_dim: int, hidden_dim: int, num_classes: int, rng: RngStream) -> NetworkParams:
    if min(input_dim, hidden_dim, num_classes) < 1:
        raise ValueError("mlp dimensions must be positive")
    gen = rng.generator()
    tensors = {
        "w1": _uniform_init(gen, (input_dim, hidden_dim), input_dim),
        "b1": _uniform_init(gen, (hidden_dim,), input_dim),
        "w2": _uniform_init(gen, (hidden_dim, num_classes), hidden_dim),
        "b2": _uniform_init(gen, (num_classes,), hidden_dim),
    }
    meta = {"input_dim": input_dim, "hidden_dim": hidden_dim, "num_classes": num_classes}
    return NetworkParams("mlp", meta, tensors)


def lenet_stage_dims(height: int, width: int) -> list[tuple[int, int]]:
    """Spatial dims after each stage; raises if the stack does not fit."""
    dims = [(height, width)]
    h, w = height, width
    for stage in (1, 2):
        h, w = h - 4, w - 4
        if h < 2 or w < 2 or h % 2 or w % 2:
            raise ValueError(
                f"lenet stage {stage}: {height}x{width} input leaves {h}x{w} "
                "after the 5x5 conv, need an even size of at least 2 to pool"
            )
        dims.append((h, w))
        h, w = h // 2, w // 2
        dims.append((h, w))
    return dims


def init_lenet(height: int, width: int, channels: int, num_classes: int, rng: RngStream) -> NetworkParams:
    dims = lenet_stage_dims(height, width)
    fh, fw = dims[-1]
    feat = fh * fw * 12
    gen = rng.generator()
    tensors = {
        "conv1_w": _uniform_init(gen, (5, 5, channels, 6), 25 * channels),
        "conv1_b": _uniform_init(gen, (6,), 25 * channels),
        "conv2_w": _uniform_init(gen, (5, 5, 6, 12), 25 * 6),
        "conv2_b": _uniform_init(gen, (12,), 25 * 6),
        "fc_w": _uniform_init(gen, (feat, num_classes), feat),
        "fc_b": _uniform_init(gen, (num_classes,), feat),
    }
    meta = {"height": height, "width": width, "channels": channels, "num_classes": num_classes}
    return NetworkParams("lenet", meta, tensors)


def init_network(arch: str, rng: RngStream, *, input_dim: int = None, hidden_dim: int = 128,
                 height: int = None, width: int = None, channels: int = 1,
                 num_classes: int = 10) -> NetworkParams:
    if arch == "mlp":
        if input_dim is None:
            if height is None or width is None:
                raise ValueError("mlp needs input_dim or height/width")
            input_dim = height * width * channels
        return init_mlp(input_dim, hidden_dim, num_classes, rng)
    if arch == "lenet":
        if height is None or width is None:
            raise ValueError("lenet needs height and width")
        return init_lenet(height, width, channels, num_classes, rng)
    raise ValueError(f"unknown architecture {arch!r}")


def _as_batch(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Coerce input to the batch layout the architecture expects."""
    x = np.asarray(x, dtype=np.float64)
    if params.arch == "mlp":
        d = params.meta["input_dim"]
        if x.ndim == 1:
            x = x[None, :]
        elif x.ndim > 2:
            x = x.reshape(x.shape[0], -1)
        if x.shape[1] != d:
            raise ValueError(f"mlp expects {d} features, got {x.shape[1]}")
        return x
    h, w, c = params.meta["height"], params.meta["width"], params.meta["channels"]
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        if x.shape[1] != h * w * c:
            raise ValueError(f"lenet expects {h * w * c} features, got {x.shape[1]}")
        x = x.reshape(x.shape[0], h, w, c)
    elif x.ndim == 3:
        x = x[None, ...]
    if x.shape[1:] != (h, w, c):
        raise ValueError(f"lenet expects {h}x{w}x{c} images, got {x.shape[1:]}")
    return x


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cache(params: NetworkParams, x: np.ndarray) -> dict:
    t = params.tensors
    if params.arch == "mlp":
        a = np.tanh(x @ t["w1"] + t["b1"])
        logits = a @ t["w2"] + t["b2"]
        return {"x": x, "a": a, "logits": logits}
    z1 = backend.conv2d_fwd(x, t["conv1_w"], t["conv1_b"])
    a1 = _sigmoid(z1)
    p1 = backend.avgpool2_fwd(a1)
    z2 = backend.conv2d_fwd(p1, t["conv2_w"], t["conv2_b"])
    a2 = _sigmoid(z2)
    p2 = backend.avgpool2_fwd(a2)
    f = p2.reshape(p2.shape[0], -1)
    logits = f @ t["fc_w"] + t["fc_b"]
    return {"x": x, "a1": a1, "p1": p1, "a2": a2, "f": f, "logits": logits}


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Class logits, shape (batch, num_classes)."""
    return _forward_cache(params, _as_batch(params, x))["logits"]


def _backward(params: NetworkParams, cache: dict, dlogits: np.ndarray):
    """Parameter grads and input grad given dL/dlogits."""
    t = params.tensors
    if params.arch == "mlp":
        a, x = cache["a"], cache["x"]
        gw2 = a.T @ dlogits
        gb2 = dlogits.sum(axis=0)
        da = dlogits @ t["w2"].T
        dz1 = da * (1.0 - a * a)
        gw1 = x.T @ dz1
        gb1 = dz1.sum(axis=0)
        gx = dz1 @ t["w1"].T
        grads = {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}
        return grads, gx
    f, a2, p1, a1, x = cache["f"], cache["a2"], cache["p1"], cache["a1"], cache["x"]
    gfc_w = f.T @ dlogits
    gfc_b = dlogits.sum(axis=0)
    gp2 = (dlogits @ t["fc_w"].T).reshape(a2.shape[0], a2.shape[1] // 2, a2.shape[2] // 2, 12)
    gz2 = backend.avgpool2_bwd(gp2) * a2 * (1.0 - a2)
    gp1, gc2w, gc2b = backend.conv2d_bwd(p1, t["conv2_w"], gz2)
    gz1 = backend.avgpool2_bwd(gp1) * a1 * (1.0 - a1)
    gx, gc1w, gc1b = backend.conv2d_bwd(x, t["conv1_w"], gz1)
    grads = {"conv1_w": gc1w, "conv1_b": gc1b, "conv2_w": gc2w, "conv2_b": gc2b,
             "fc_w": gfc_w, "fc_b": gfc_b}
    return grads, gx


def _one_hot(y: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 2:
        return np.asarray(y, dtype=np.float64)
    out = np.zeros((y.shape[0], num_classes))
    out[np.arange(y.shape[0]), y.astype(int)] = 1.0
    return out


def loss_and_grad(params: NetworkParams, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its parameter gradients.

    y may be integer class labels (n,) or a row-stochastic matrix of
    soft labels (n, num_classes). Returns (loss, grads: NetworkParams).
    """
    xb = _as_batch(params, x)
    cache = _forward_cache(params, xb)
    yh = _one_hot(np.atleast_1d(y), params.meta["num_classes"])
    n = xb.shape[0]
    logp = log_softmax(cache["logits"])
    loss = float(-(yh * logp).sum() / n)
    dlogits = (softmax(cache["logits"]) - yh) / n
    grads, _ = _backward(params, cache, dlogits)
    return loss, NetworkParams(params.arch, dict(params.meta), grads)


def loss_only(params: NetworkParams, x: np.ndarray, y: np.ndarray) -> float:
    xb = _as_batch(params, x)
    logits = _forward_cache(params, xb)["logits"]
    yh = _one_hot(np.atleast_1d(y), params.meta["num_classes"])
    return float(-(yh * log_softmax(logits)).sum() / xb.shape[0])


def per_example_grads(params: NetworkParams, x: np.ndarray, y: np.ndarray,
                      microbatch: int = 64) -> np.ndarray:
    """Flat gradient of each example's own loss, shape (n, param_count).

    MLP grads factor as outer products, so whole microbatches are done
    with einsum; the conv net falls back to one-example backward passes.
    """
    xb = _as_batch(params, x)
    yh = _one_hot(np.atleast_1d(y), params.meta["num_classes"])
    n = xb.shape[0]
    out = np.empty((n, params.param_count()))
    if params.arch == "mlp":
        t = params.tensors
        for lo in range(0, n, microbatch):
            hi = min(lo + microbatch, n)
            xs = xb[lo:hi]
            a = np.tanh(xs @ t["w1"] + t["b1"])
            logits = a @ t["w2"] + t["b2"]
            d2 = softmax(logits) - yh[lo:hi]
            d1 = (d2 @ t["w2"].T) * (1.0 - a * a)
            gw1 = np.einsum("ni,nh->nih", xs, d1)
            gw2 = np.einsum("nh,nc->nhc", a, d2)
            m = hi - lo
            out[lo:hi] = np.concatenate(
                [gw1.reshape(m, -1), d1, gw2.reshape(m, -1), d2], axis=1)
        return out
    for i in range(n):
        _, g = loss_and_grad(params, xb[i:i + 1], yh[i:i + 1])
        out[i] = g.flatten()
    return out


def soft_label_loss_and_grads(params: NetworkParams, x: np.ndarray, y_soft: np.ndarray):
    """Single-example loss with a soft-label probability vector.

    Returns (loss, param grads as NetworkParams, grad wrt x, grad wrt
    y_soft). With a one-hot y_soft this matches loss_and_grad exactly.
    """
    xb = _as_batch(params, x)
    if xb.shape[0] != 1:
        raise ValueError("soft_label_loss_and_grads takes a single example")
    y_soft = np.asarray(y_soft, dtype=np.float64)
    if y_soft.shape != (params.meta["num_classes"],):
        raise ValueError(f"y_soft must have shape ({params.meta['num_classes']},)")
    cache = _forward_cache(params, xb)
    logp = log_softmax(cache["logits"])[0]
    loss = float(-(y_soft * logp).sum())
    dlogits = (softmax(cache["logits"])[0] - y_soft)[None, :]
    grads, gx = _backward(params, cache, dlogits)
    gx = gx[0] if params.arch == "mlp" else gx[0]
    grad_y = -logp
    return loss, NetworkParams(params.arch, dict(params.meta), grads), gx, grad_y


def check_gradients(params: NetworkParams, x: np.ndarray, y: np.ndarray,
                    num_coords: int | None = 30, step: float = 1e-5,
                    rng: RngStream | None = None, denom_floor: float = 1e-4) -> float:
    """Max relative error of backprop vs central differences.

    Probes num_coords randomly chosen parameter coordinates (None means
    every coordinate). Relative error uses a small absolute floor so
    near-zero coordinates do not blow up the ratio on finite-difference
    noise.
    """
    _, grads = loss_and_grad(params, x, y)
    gflat = grads.flatten()
    flat = params.flatten()
    if num_coords is None or num_coords >= flat.size:
        idx = np.arange(flat.size)
    else:
        gen = (rng or RngStream(0)).generator()
        idx = gen.choice(flat.size, size=num_coords, replace=False)
    worst = 0.0
    for i in idx:
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        lp = loss_only(params.unflatten(bumped), x, y)
        bumped[i] = flat[i] - step
        lm = loss_only(params.unflatten(bumped), x, y)
        fd = (lp - lm) / (2.0 * step)
        denom = max(abs(fd), abs(gflat[i]), denom_floor)
        worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst


def _descriptor(params: NetworkParams) -> str:
    items = " ".join(f"{k}={v}" for k, v in sorted(params.meta.items()))
    return f"{_MAGIC} arch={params.arch} {items}"


def save_checkpoint(params: NetworkParams, path) -> None:
    """Writes a one-line ASCII descriptor then raw little-endian float64."""
    with open(path, "wb") as fh:
        fh.write((_descriptor(params) + "\n").encode("ascii"))
        fh.write(params.flatten().astype("<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        blob = fh.read()
    fields = header.split()
    if " ".join(fields[:2]) != _MAGIC:
        raise ValueError(f"not a checkpoint file: header {header!r}")
    kv = dict(f.split("=", 1) for f in fields[2:])
    arch = kv.pop("arch")
    meta = {k: int(v) for k, v in kv.items()}
    rng = RngStream(0)
    if arch == "mlp":
        params = init_mlp(meta["input_dim"], meta["hidden_dim"], meta["num_classes"], rng)
    elif arch == "lenet":
        params = init_lenet(meta["height"], meta["width"], meta["channels"], meta["num_classes"], rng)
    else:
        raise ValueError(f"unknown architecture in checkpoint: {arch!r}")
    want = params.param_count() * 8
    if len(blob) != want:
        raise ValueError(f"checkpoint has {len(blob)} payload bytes, expected {want}")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    return params.unflatten(flat)


def iter_named_flat(params: NetworkParams) -> Iterable[tuple[str, np.ndarray]]:
    """(name, raveled values) in flatten order; raveled views are copies."""
    for name, t in params.tensors.items():
        yield name, t.ravel().copy()
