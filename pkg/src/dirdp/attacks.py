"""Gradient-inversion attacks: reconstruct an input from its gradient.

Both attacks minimize a distance between the gradient produced by a
dummy example and a captured target gradient:

* ``dlg``: squared L2 gradient distance, jointly optimizing the dummy
  image and a soft label (logits passed through softmax so the label
  stays a probability vector). Plain gradient descent.
* ``iga``: cosine gradient distance plus anisotropic total variation,
  with the true label known. Projected descent keeps pixels in [0, 1].

Descending these losses needs gradients *through* the network's own
backward pass. Two interchangeable modes: ``finite_diff`` (central
differences per dummy coordinate, works for any architecture) and
``analytic_mlp`` (closed-form double backprop for the tanh MLP).

Reports carry the best iterate by attack loss, not the last one;
descent on noisy targets is not monotone. A loss that goes non-finite
marks the report diverged and stops the run instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics, nets
from .mechanisms import RngStream

DLG_DEFAULT_LR = 0.1
IGA_DEFAULT_LR = 0.01
DEFAULT_ALPHA_TV = 1e-4

_TINY = 1e-300


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b); defined as 1.0 when either vector vanishes."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom < _TINY:
        return 1.0
    return 1.0 - float(np.dot(a, b)) / denom


def total_variation(img: np.ndarray) -> float:
    """Anisotropic TV: sum of absolute neighbor differences, both axes."""
    img = np.asarray(img, dtype=np.float64)
    dv = np.abs(img[1:] - img[:-1]).sum()
    dh = np.abs(img[:, 1:] - img[:, :-1]).sum()
    return float(dv + dh)


def total_variation_grad(img: np.ndarray) -> np.ndarray:
    """Subgradient of total_variation; sign(0) taken as 0."""
    img = np.asarray(img, dtype=np.float64)
    g = np.zeros_like(img)
    sv = np.sign(img[1:] - img[:-1])
    g[1:] += sv
    g[:-1] -= sv
    sh = np.sign(img[:, 1:] - img[:, :-1])
    g[:, 1:] += sh
    g[:, :-1] -= sh
    return g


@dataclass
class AttackConfig:
    method: str  # dlg | iga
    iterations: int = 1000
    lr: float | None = None  # step size eta; method default when None
    alpha_tv: float = DEFAULT_ALPHA_TV
    hvp_mode: str = "finite_diff"  # finite_diff | analytic_mlp
    fd_step: float = 1e-5
    init: str = "uniform_random"  # uniform_random | gaussian_random
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("dlg", "iga"):
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.hvp_mode not in ("finite_diff", "analytic_mlp"):
            raise ValueError(f"unknown hvp_mode {self.hvp_mode!r}")
        if self.init not in ("uniform_random", "gaussian_random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.alpha_tv < 0:
            raise ValueError("alpha_tv must be nonnegative")
        if self.lr is None:
            self.lr = DLG_DEFAULT_LR if self.method == "dlg" else IGA_DEFAULT_LR


@dataclass
class AttackReport:
    method: str
    reconstructed: np.ndarray
    loss_trajectory: np.ndarray  # attack loss at every iterate, length iterations+1
    final_ssim: float
    final_mse: float
    best_iteration: int
    best_loss: float
    label_estimate: int | None
    diverged: bool = False
    extras: dict = field(default_factory=dict)


def _grad_of_example(params: nets.NetworkParams, x_flat: np.ndarray, q: np.ndarray) -> np.ndarray:
    _, grads, _, _ = nets.soft_label_loss_and_grads(params, x_flat, q)
    return grads.flatten()


def _distance(loss_kind: str, g: np.ndarray, target: np.ndarray) -> float:
    if loss_kind == "sq":
        d = g - target
        return float(np.dot(d, d))
    return cosine_distance(g, target)


def _residual(loss_kind: str, g: np.ndarray, target: np.ndarray) -> np.ndarray:
    """dD/dG for the chosen gradient distance."""
    if loss_kind == "sq":
        return 2.0 * (g - target)
    ng = float(np.linalg.norm(g))
    nt = float(np.linalg.norm(target))
    if ng * nt < _TINY:
        return np.zeros_like(g)
    return -target / (ng * nt) + (float(np.dot(g, target)) / (ng ** 3 * nt)) * g


def _target_flat(params: nets.NetworkParams, target) -> np.ndarray:
    t = target.flatten() if isinstance(target, nets.NetworkParams) else \
        np.asarray(target, dtype=np.float64).ravel()
    if t.shape != (params.param_count(),):
        raise ValueError(f"target gradient has {t.size} entries, "
                         f"model has {params.param_count()} parameters")
    return t


def _one_hot(label: int, classes: int) -> np.ndarray:
    q = np.zeros(classes)
    q[int(label)] = 1.0
    return q


def dlg_loss(params: nets.NetworkParams, target_grad, x: np.ndarray,
             ylogits: np.ndarray) -> float:
    """Squared L2 distance between the dummy gradient and the target.

    The dummy gradient is taken at (x, softmax(ylogits)).
    """
    target = _target_flat(params, target_grad)
    q = nets.softmax(np.asarray(ylogits, dtype=np.float64).ravel())
    g = _grad_of_example(params, np.asarray(x, dtype=np.float64).ravel(), q)
    return _distance("sq", g, target)


def iga_loss(params: nets.NetworkParams, target_grad, x: np.ndarray, y: int,
             alpha_tv: float = DEFAULT_ALPHA_TV) -> float:
    """Cosine gradient distance plus alpha_tv * TV(x), label known.

    A vanishing dummy gradient saturates the cosine term at 1.
    """
    target = _target_flat(params, target_grad)
    x = np.asarray(x, dtype=np.float64)
    q = _one_hot(y, params.meta["num_classes"])
    g = _grad_of_example(params, x.ravel(), q)
    img = x if x.ndim >= 2 else x[:, None]
    return _distance("cos", g, target) + alpha_tv * total_variation(img)


def attack_input_gradient(params: nets.NetworkParams, target_grad, x: np.ndarray,
                          y, method: str, *, hvp_mode: str = "finite_diff",
                          fd_step: float = 1e-5):
    """Gradient of the matching loss wrt the dummy variables.

    method "dlg": y is a label-logit vector; returns (loss, grad over
    flat pixels, grad over label logits) for the squared distance.
    method "iga": y is the known class index; returns (loss, grad over
    flat pixels, None) for the cosine distance. The TV term is not
    included here; its gradient is a cheap closed form handled by the
    attack loop.

    finite_diff differentiates the matching loss numerically, one
    central difference per coordinate; analytic_mlp uses closed-form
    double backprop and requires the mlp architecture.
    """
    target = _target_flat(params, target_grad)
    x = np.asarray(x, dtype=np.float64).ravel()
    if method == "dlg":
        u = np.asarray(y, dtype=np.float64).ravel()
        q = nets.softmax(u)
        loss_kind = "sq"
    elif method == "iga":
        q = _one_hot(y, params.meta["num_classes"])
        loss_kind = "cos"
    else:
        raise ValueError(f"unknown attack method {method!r}")
    if hvp_mode == "analytic_mlp":
        if params.arch != "mlp":
            raise ValueError("analytic_mlp mode only supports the mlp architecture")
        val, gx, gq = _analytic_mlp_grad(params, x, q, target, loss_kind)
        if method == "iga":
            return val, gx, None
        return val, gx, _softmax_chain(q, gq)
    if hvp_mode != "finite_diff":
        raise ValueError(f"unknown hvp_mode {hvp_mode!r}")
    val = _distance(loss_kind, _grad_of_example(params, x, q), target)
    gx = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] = x[i] + fd_step
        dp = _distance(loss_kind, _grad_of_example(params, xp, q), target)
        xp[i] = x[i] - fd_step
        dm = _distance(loss_kind, _grad_of_example(params, xp, q), target)
        gx[i] = (dp - dm) / (2.0 * fd_step)
    if method == "iga":
        return val, gx, None
    gu = np.empty_like(u)
    for c in range(u.size):
        up = u.copy()
        up[c] = u[c] + fd_step
        dp = _distance(loss_kind, _grad_of_example(params, x, nets.softmax(up)), target)
        up[c] = u[c] - fd_step
        dm = _distance(loss_kind, _grad_of_example(params, x, nets.softmax(up)), target)
        gu[c] = (dp - dm) / (2.0 * fd_step)
    return val, gx, gu


def _analytic_mlp_grad(params: nets.NetworkParams, x: np.ndarray, q: np.ndarray,
                       target: np.ndarray, loss_kind: str):
    t = params.tensors
    w1, b1, w2, b2 = t["w1"], t["b1"], t["w2"], t["b2"]
    a = np.tanh(x @ w1 + b1)
    s = 1.0 - a * a
    p = nets.softmax(a @ w2 + b2)
    d2 = p - q
    d1 = (w2 @ d2) * s
    g = np.concatenate([np.outer(x, d1).ravel(), d1, np.outer(a, d2).ravel(), d2])
    val = _distance(loss_kind, g, target)
    r = _residual(loss_kind, g, target)
    sl = params.slices()
    rw1 = r[sl["w1"]].reshape(w1.shape)
    rb1 = r[sl["b1"]]
    rw2 = r[sl["w2"]].reshape(w2.shape)
    rb2 = r[sl["b2"]]
    # phi(x, q) = <r, G(x, q)> with r held fixed; gx, gq are its exact grads
    u1 = rw1.T @ x + rb1
    u2 = rw2.T @ a + rb2
    w2c = u2 + w2.T @ (u1 * s)
    jw2c = p * w2c - p * float(p @ w2c)
    va = rw2 @ d2 - 2.0 * a * (w2 @ d2) * u1
    ta = w2 @ jw2c + va
    gx = w1 @ (ta * s) + rw1 @ d1
    gq = -w2c
    return val, gx, gq


def _softmax_chain(q: np.ndarray, gq: np.ndarray) -> np.ndarray:
    """Pull a gradient wrt softmax outputs back to the logits."""
    return q * gq - q * float(q @ gq)


def _init_vector(kind: str, gen: np.random.Generator, n: int) -> np.ndarray:
    return gen.random(n) if kind == "uniform_random" else gen.standard_normal(n)


def _finish(method, cfg, best_x, image_shape, trajectory, best_it, best_val,
            label, diverged, ground_truth) -> AttackReport:
    recon = best_x.reshape(image_shape)
    final_mse = float("nan")
    final_ssim = float("nan")
    if ground_truth is not None:
        truth = np.asarray(ground_truth, dtype=np.float64).reshape(image_shape)
        # raw values for MSE; SSIM sees a [0,1]-clipped copy
        final_mse = metrics.mse(recon, truth)
        final_ssim = metrics.ssim(np.clip(recon, 0.0, 1.0), truth)
    return AttackReport(
        method=method,
        reconstructed=recon,
        loss_trajectory=np.asarray(trajectory),
        final_ssim=final_ssim,
        final_mse=final_mse,
        best_iteration=best_it,
        best_loss=float(best_val),
        label_estimate=label,
        diverged=diverged,
        extras={"iterations": cfg.iterations, "lr": cfg.lr},
    )


def dlg_attack(params: nets.NetworkParams, target_grad, cfg: AttackConfig,
               ground_truth=None, image_shape=None,
               rng: RngStream | None = None) -> AttackReport:
    """Joint descent on a dummy image and label logits.

    image_shape is taken from ground_truth when omitted. The report's
    reconstruction is the lowest-loss iterate and, when ground truth is
    given, carries its MSE (raw values) and SSIM (clipped to [0,1]).
    """
    if cfg.method != "dlg":
        raise ValueError("config is not a dlg config")
    target = _target_flat(params, target_grad)
    if image_shape is None:
        if ground_truth is None:
            raise ValueError("need image_shape or ground_truth")
        image_shape = np.asarray(ground_truth).shape
    num_classes = params.meta["num_classes"]
    gen = (rng or RngStream(cfg.seed)).generator()
    x = _init_vector(cfg.init, gen, int(np.prod(image_shape)))
    u = _init_vector(cfg.init, gen, num_classes)
    trajectory = []
    best_val, best_x, best_u, best_it = np.inf, x.copy(), u.copy(), 0
    diverged = False
    for it in range(cfg.iterations + 1):
        val, gx, gu = attack_input_gradient(params, target, x, u, "dlg",
                                            hvp_mode=cfg.hvp_mode, fd_step=cfg.fd_step)
        if not np.isfinite(val):
            diverged = True
            trajectory.append(float(val))
            break
        trajectory.append(float(val))
        if val < best_val:
            best_val, best_it = float(val), it
            best_x, best_u = x.copy(), u.copy()
        if it == cfg.iterations:
            break
        x = x - cfg.lr * gx
        u = u - cfg.lr * gu
    return _finish("dlg", cfg, best_x, image_shape, trajectory, best_it, best_val,
                   int(np.argmax(best_u)), diverged, ground_truth)


def iga_attack(params: nets.NetworkParams, target_grad, y: int, cfg: AttackConfig,
               ground_truth=None, image_shape=None,
               rng: RngStream | None = None) -> AttackReport:
    """Projected descent on the dummy image with the label known.

    Every iterate (and hence the reported reconstruction) lies in
    [0, 1]^n. The optimized and recorded loss includes the TV term.
    """
    if cfg.method != "iga":
        raise ValueError("config is not an iga config")
    target = _target_flat(params, target_grad)
    if image_shape is None:
        if ground_truth is None:
            raise ValueError("need image_shape or ground_truth")
        image_shape = np.asarray(ground_truth).shape
    gen = (rng or RngStream(cfg.seed)).generator()
    x = np.clip(_init_vector(cfg.init, gen, int(np.prod(image_shape))), 0.0, 1.0)
    trajectory = []
    best_val, best_x, best_it = np.inf, x.copy(), 0
    diverged = False
    for it in range(cfg.iterations + 1):
        val, gx, _ = attack_input_gradient(params, target, x, y, "iga",
                                           hvp_mode=cfg.hvp_mode, fd_step=cfg.fd_step)
        img = x.reshape(image_shape)
        val = val + cfg.alpha_tv * total_variation(img)
        gx = gx + cfg.alpha_tv * total_variation_grad(img).ravel()
        if not np.isfinite(val):
            diverged = True
            trajectory.append(float(val))
            break
        trajectory.append(float(val))
        if val < best_val:
            best_val, best_it = float(val), it
            best_x = x.copy()
        if it == cfg.iterations:
            break
        x = np.clip(x - cfg.lr * gx, 0.0, 1.0)
    return _finish("iga", cfg, best_x, image_shape, trajectory, best_it, best_val,
                   int(y), diverged, ground_truth)


def run_attack(params: nets.NetworkParams, target_grad, image_shape, cfg: AttackConfig,
               rng: RngStream, true_label: int | None = None,
               ground_truth=None) -> AttackReport:
    """Dispatch to the configured attack method."""
    if cfg.method == "dlg":
        return dlg_attack(params, target_grad, cfg, ground_truth=ground_truth,
                          image_shape=image_shape, rng=rng)
    if true_label is None:
        raise ValueError("iga needs the true label")
    return iga_attack(params, target_grad, int(true_label), cfg,
                      ground_truth=ground_truth, image_shape=image_shape, rng=rng)
