"""Compiled-vs-python kernel benchmark.

Times the convolution/pooling kernels and the training paths built on
them under both backends, by re-running itself in a subprocess with
DIRDP_BACKEND set (the same selection mechanism normal imports use).

    python3 benchmarks/backend_bench.py [--repeats N]

Only the lenet paths touch the kernels; the mlp is pure matmul and is
included once as a reference row that should not move between backends.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workloads():
    from dirdp import backend
    from dirdp.mechanisms import RngStream
    from dirdp.nets import init_lenet, init_mlp, loss_and_grad, per_example_grads
    from dirdp.training import TrainingConfig, private_step

    gen = np.random.default_rng(0)
    x_conv = gen.standard_normal((32, 16, 16, 1))
    w_conv = gen.standard_normal((5, 5, 1, 6)) * 0.2
    b_conv = gen.standard_normal(6) * 0.1
    y_conv = backend.conv2d_fwd(x_conv, w_conv, b_conv)
    gy = gen.standard_normal(y_conv.shape)
    x_pool = gen.standard_normal((32, 12, 12, 6))
    gy_pool = gen.standard_normal((32, 6, 6, 6))

    lenet = init_lenet(16, 16, 1, 10, RngStream(1))
    mlp = init_mlp(256, 64, 10, RngStream(1))
    xb = gen.random((32, 16, 16, 1))
    yb = gen.integers(0, 10, size=32)
    xf = xb.reshape(32, -1)
    cfg = TrainingConfig(epochs=1, lot_size=32, lr=0.1, clip_norm=1.0,
                         mechanism="vmf", epsilon_v=100.0)

    return [
        ("conv2d_fwd 32x16x16x1 -> 6f", lambda: backend.conv2d_fwd(x_conv, w_conv, b_conv)),
        ("conv2d_bwd same", lambda: backend.conv2d_bwd(x_conv, w_conv, gy)),
        ("avgpool2 fwd+bwd 32x12x12x6", lambda: (backend.avgpool2_fwd(x_pool),
                                                 backend.avgpool2_bwd(gy_pool))),
        ("lenet loss_and_grad lot 32", lambda: loss_and_grad(lenet, xb, yb)),
        ("lenet per-example grads lot 32", lambda: per_example_grads(lenet, xb, yb)),
        ("lenet private vmf step lot 32", lambda: private_step(lenet, xb, yb,
                                                               np.arange(32), cfg, 0, 0)),
        ("mlp loss_and_grad lot 32 (no kernels)", lambda: loss_and_grad(mlp, xf, yb)),
    ]


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_worker(repeats: int) -> None:
    from dirdp import backend

    rows = [(name, _time(fn, repeats)) for name, fn in _workloads()]
    print(json.dumps({"backend": backend.backend_name(), "rows": rows}))


def run_parent(repeats: int) -> int:
    results = {}
    for choice in ("python", "compiled"):
        env = dict(os.environ, DIRDP_BACKEND=choice)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--repeats", str(repeats)],
            capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            if choice == "compiled":
                print("compiled backend not built; showing python timings only\n")
                continue
            print(proc.stderr, file=sys.stderr)
            return 1
        results[choice] = json.loads(proc.stdout.strip().splitlines()[-1])
    py_rows = dict(results["python"]["rows"])
    print(f"{'workload':<42} {'python':>10}", end="")
    if "compiled" in results:
        print(f" {'compiled':>10} {'speedup':>8}")
    else:
        print()
    for name, t_py in results["python"]["rows"]:
        line = f"{name:<42} {t_py * 1e3:9.3f}ms"
        if "compiled" in results:
            t_cy = dict(results["compiled"]["rows"])[name]
            line += f" {t_cy * 1e3:9.3f}ms {t_py / t_cy:7.2f}x"
        print(line)
    return 0


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        run_worker(args.repeats)
        return 0
    return run_parent(args.repeats)


if __name__ == "__main__":
    sys.exit(main())
