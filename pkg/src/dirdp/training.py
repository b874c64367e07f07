"""Private gradient-descent training.

Two noisy optimizers over the same loop skeleton:

* gaussian: clip each example's gradient to norm at most C, add
  N(0, sigma^2) noise per example, average over the lot size L.
* vmf: rescale each example's gradient to norm exactly C, replace its
  direction with a von Mises-Fisher draw centered on it, average over L.

Lots are Poisson-sampled with rate L/n (each example independently each
step), so the sum is divided by the nominal lot size L rather than the
realized count. mechanism "none" is plain SGD on the lot mean.

Randomness is namespaced so that runs are reproducible and per-example
noise depends only on (seed, step, example index), never on how the lot
happened to be ordered: counter = tag<<56 | step<<32 | index.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import nets
from .mechanisms import GaussParams, RngStream, VmfParams, gaussian_perturb, vmf_sample
from .sphere import random_unit

TAG_INIT = 1
TAG_BATCH = 2
TAG_NOISE = 3
TAG_GUARD = 4

_ZERO_NORM = 1e-12


def derive_counter(tag: int, step: int = 0, index: int = 0) -> int:
    """Pack (tag, step, index) into the 64-bit stream counter."""
    if not 0 <= tag < (1 << 8):
        raise ValueError("tag out of range")
    if not 0 <= step < (1 << 24):
        raise ValueError("step out of range")
    if not 0 <= index < (1 << 32):
        raise ValueError("index out of range")
    return (tag << 56) | (step << 32) | index


def init_stream(seed: int) -> RngStream:
    return RngStream(seed, derive_counter(TAG_INIT))


def clip_gradient(g: np.ndarray, clip_norm: float) -> np.ndarray:
    """Shrink g to norm at most clip_norm; shorter vectors pass through."""
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    return g / max(1.0, norm / clip_norm)


def gradient_direction(g: np.ndarray, guard_rng) -> np.ndarray:
    """Unit direction of g; a uniform random direction when g vanishes.

    The guard keeps the mechanism well-defined on saturated examples,
    and the fallback direction carries no information about the data.
    """
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm < _ZERO_NORM:
        gen = guard_rng.generator() if isinstance(guard_rng, RngStream) else guard_rng
        return random_unit(g.size, gen)
    return g / norm


def batch_sensitivity(clip_norm: float, lot_size: int) -> float:
    """L2 sensitivity of the averaged clipped-gradient sum: 2C/L."""
    return 2.0 * clip_norm / lot_size


@dataclass
class TrainingConfig:
    epochs: int
    lot_size: int
    lr: float
    clip_norm: float = 1.0
    mechanism: str = "none"  # none | gaussian | vmf
    sigma: float = 0.0
    epsilon_v: float = 0.0
    halve_epsilon: bool = False
    noise_scope: str = "concatenated"  # concatenated | per_layer
    sampling: str = "poisson"  # poisson | cyclic
    microbatch: int = 64
    eval_every: int = 1

    def __post_init__(self):
        if self.mechanism not in ("none", "gaussian", "vmf"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.noise_scope not in ("concatenated", "per_layer"):
            raise ValueError(f"unknown noise_scope {self.noise_scope!r}")
        if self.sampling not in ("poisson", "cyclic"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.epochs < 1 or self.lot_size < 1:
            raise ValueError("epochs and lot_size must be positive")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ValueError("lr and clip_norm must be positive")
        if self.mechanism == "gaussian" and self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.mechanism == "vmf" and self.epsilon_v <= 0:
            raise ValueError("vmf mechanism needs positive epsilon_v")

    def effective_epsilon(self) -> float:
        return self.epsilon_v / 2.0 if self.halve_epsilon else self.epsilon_v


def privatize_example_gradient(g: np.ndarray, example_id: int, step: int, seed: int,
                               cfg: TrainingConfig, slices: dict) -> np.ndarray:
    """Privatized contribution of one example's flat gradient."""
    noise_rng = RngStream(seed, derive_counter(TAG_NOISE, step, example_id))
    if cfg.mechanism == "gaussian":
        clipped = clip_gradient(g, cfg.clip_norm)
        return gaussian_perturb(GaussParams(cfg.sigma), clipped, noise_rng)
    guard_rng = RngStream(seed, derive_counter(TAG_GUARD, step, example_id))
    eps = cfg.effective_epsilon()
    if cfg.noise_scope == "concatenated":
        mu = gradient_direction(g, guard_rng)
        return cfg.clip_norm * vmf_sample(VmfParams(eps, g.size), mu, noise_rng)
    gen = noise_rng.generator()
    guard_gen = guard_rng.generator()
    out = np.empty_like(g)
    for sl in slices.values():
        mu = gradient_direction(g[sl], guard_gen)
        out[sl] = cfg.clip_norm * vmf_sample(VmfParams(eps, mu.size), mu, gen)
    return out


def private_step(params: nets.NetworkParams, xb: np.ndarray, yb: np.ndarray,
                 example_ids: np.ndarray, cfg: TrainingConfig, seed: int,
                 step: int) -> tuple[nets.NetworkParams, float]:
    """One optimizer step on a sampled lot; returns (params, lot loss)."""
    if len(example_ids) == 0:
        return params, float("nan")
    if cfg.mechanism == "none":
        loss, grads = nets.loss_and_grad(params, xb, yb)
        return params.unflatten(params.flatten() - cfg.lr * grads.flatten()), loss
    loss = nets.loss_only(params, xb, yb)
    pex = nets.per_example_grads(params, xb, yb, cfg.microbatch)
    slices = params.slices()
    total = np.zeros(params.param_count())
    for j, ex in enumerate(example_ids):
        total += privatize_example_gradient(pex[j], int(ex), step, seed, cfg, slices)
    new_flat = params.flatten() - cfg.lr * total / cfg.lot_size
    return params.unflatten(new_flat), loss


def _lot_indices(cfg: TrainingConfig, seed: int, step: int, epoch: int,
                 step_in_epoch: int, n: int, perm: np.ndarray | None) -> np.ndarray:
    if cfg.sampling == "poisson":
        gen = RngStream(seed, derive_counter(TAG_BATCH, step)).generator()
        mask = gen.random(n) < cfg.lot_size / n
        return np.flatnonzero(mask)
    lo = step_in_epoch * cfg.lot_size
    return perm[lo:lo + cfg.lot_size]


def train(params: nets.NetworkParams, x_train: np.ndarray, y_train: np.ndarray,
          cfg: TrainingConfig, seed: int, *, x_test: np.ndarray | None = None,
          y_test: np.ndarray | None = None,
          trace_cb=None) -> tuple[nets.NetworkParams, list[dict]]:
    """Run the configured optimizer; returns final params and a trace.

    The trace holds one record per epoch: mean lot loss, test accuracy
    when a test set is given, and wall times split between the gradient
    and noise work. trace_cb, when given, is called with each record.
    """
    n = x_train.shape[0]
    if n < 1:
        raise ValueError("empty training set")
    steps_per_epoch = max(1, n // cfg.lot_size)
    trace: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        perm = None
        if cfg.sampling == "cyclic":
            gen = RngStream(seed, derive_counter(TAG_BATCH, epoch, 1)).generator()
            perm = gen.permutation(n)
        losses = []
        t0 = time.perf_counter()
        for k in range(steps_per_epoch):
            idx = _lot_indices(cfg, seed, step, epoch, k, n, perm)
            params, loss = private_step(params, x_train[idx], y_train[idx], idx, cfg, seed, step)
            if np.isfinite(loss):
                losses.append(loss)
            step += 1
        record = {
            "epoch": epoch,
            "steps": step,
            "train_loss": float(np.mean(losses)) if losses else float("nan"),
            "seconds": time.perf_counter() - t0,
        }
        if x_test is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1):
            logits = nets.forward(params, x_test)
            record["test_accuracy"] = float(np.mean(np.argmax(logits, axis=1) == np.asarray(y_test)))
        if trace_cb is not None:
            trace_cb(record)
        trace.append(record)
    return params, trace
