"""Command-line entry point.

Subcommands:

* ``run``         full experiment cell: train, evaluate, attack, persist
* ``train``       train and evaluate only (attacks in the config are skipped)
* ``attack``      attacks only; trained-parameter targets need --checkpoint
* ``eval``        score a checkpoint on the configured test split
* ``sample-vmf``  dump direction-noise samples to CSV for inspection
* ``check-grad``  finite-difference audit of backprop
* ``report``      combine finished run directories into grid CSVs/images
* ``verify``      re-run a directory's embedded config and diff outputs

Every command that computes anything takes a mandatory --seed. Exit
codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import backend, data, harness, metrics, nets, reporting, training
from .mechanisms import RngStream, VmfParams, vmf_sample_batch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="base RNG seed (required)")


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    record = harness.run_experiment(cfg, args.seed, args.out)
    acc = record["accuracy"]
    print(f"run {record['name']}: accuracy {acc['mean']:.4f} +/- {acc['std']:.4f} "
          f"({len(record['seeds'])} replicate(s), backend {record['backend']})")
    for a in record["attacks"]:
        print(f"  attack {a['attack']} {a['method']}/{a['at']}: "
              f"ssim {a['ssim']['mean']:.4f}, mse {a['mse']['mean']:.6g}")
    print(f"results in {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = harness.load_config(args.config)
    cfg = dataclasses.replace(cfg, attacks=[])
    record = harness.run_experiment(cfg, args.seed, args.out)
    acc = record["accuracy"]
    print(f"train {record['name']}: accuracy {acc['mean']:.4f} +/- {acc['std']:.4f}")
    if args.save_checkpoint:
        x_tr, y_tr, x_te, y_te, image_shape, num_classes = harness.load_dataset(cfg, args.seed)
        params = harness._init_model(cfg, image_shape, num_classes, args.seed)
        params, _ = training.train(params, x_tr, y_tr, cfg.training, args.seed,
                                   x_test=x_te, y_test=y_te)
        nets.save_checkpoint(params, args.save_checkpoint)
        print(f"checkpoint written to {args.save_checkpoint}")
    return EXIT_OK


def _cmd_attack(args) -> int:
    cfg = harness.load_config(args.config)
    record = harness.run_attacks(cfg, args.seed, args.out, checkpoint_path=args.checkpoint)
    for a in record["attacks"]:
        print(f"attack {a['attack']} {a['method']}/{a['at']}: "
              f"ssim {a['ssim']['mean']:.4f}, mse {a['mse']['mean']:.6g}")
    print(f"results in {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = harness.load_config(args.config)
    params = nets.load_checkpoint(args.checkpoint)
    _, _, x_te, y_te, _, num_classes = harness.load_dataset(cfg, args.seed)
    logits = nets.forward(params, x_te)
    rows = []
    for k in (1, 3, 5):
        if k <= num_classes:
            rows.append((k, metrics.top_k_accuracy(logits, y_te, k)))
    for k, acc in rows:
        print(f"top-{k} accuracy: {acc:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        reporting.write_csv(os.path.join(args.out, "eval.csv"), ["k", "accuracy"], rows)
    return EXIT_OK


def _cmd_sample_vmf(args) -> int:
    if args.dim < 2:
        raise harness.ConfigError("--dim must be at least 2")
    if args.epsilon <= 0:
        raise harness.ConfigError("--epsilon must be positive")
    if args.n < 1:
        raise harness.ConfigError("--n must be positive")
    mu = np.zeros(args.dim)
    mu[0] = 1.0
    samples = vmf_sample_batch(VmfParams(args.epsilon, args.dim), mu,
                               RngStream(args.seed), args.n)
    header = [f"x{i}" for i in range(args.dim)]
    reporting.write_csv(args.out, header, [tuple(row) for row in samples])
    mrl = float(np.linalg.norm(samples.mean(axis=0)))
    print(f"wrote {args.n} samples (dim {args.dim}, epsilon {args.epsilon}) to {args.out}")
    print(f"empirical mean resultant length: {mrl:.6f}")
    print(f"mean scalar component along mu: {float(samples[:, 0].mean()):.6f}")
    return EXIT_OK


def _cmd_check_grad(args) -> int:
    rng = RngStream(args.seed)
    size = args.image_size
    if args.arch == "mlp":
        params = nets.init_mlp(size * size, args.hidden_dim, 10, rng)
    else:
        params = nets.init_lenet(size, size, 1, 10, rng)
    gen = RngStream(args.seed, 1).generator()
    x = gen.random((2, size, size, 1))
    y = gen.integers(0, 10, size=2)
    num = None if args.all_coords else args.num_coords
    err = nets.check_gradients(params, x, y, num_coords=num, rng=RngStream(args.seed, 2))
    scope = "all" if num is None else str(num)
    print(f"{args.arch} ({params.param_count()} params, {scope} coords): "
          f"max relative error {err:.3e}")
    if err > 1e-5:
        print("FAIL: exceeds 1e-5", file=sys.stderr)
        return 1
    print("OK (<= 1e-5)")
    return EXIT_OK


def _cmd_report(args) -> int:
    for run in args.runs:
        if not os.path.exists(os.path.join(run, "results.json")):
            raise harness.ConfigError(f"{run} is not a finished run directory")
    info = harness.emit_report(args.runs, args.out)
    print(f"report over {info['cells']} cell(s), {info['attack_cells']} attack cell(s), "
          f"{info['images']} image(s) -> {args.out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    mismatches = harness.verify_run(args.run)
    if mismatches:
        print("verification FAILED; differing outputs:", file=sys.stderr)
        for m in mismatches:
            print(f"  {m}", file=sys.stderr)
        return 1
    print(f"verification OK: {args.run} reproduces byte-identically (timings excluded)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dirdp",
                                 description="directional-privacy training and attack bench")
    ap.add_argument("--backend-info", action="store_true",
                    help="print the active kernel backend and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("run", help="train, evaluate and attack per config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("train", help="train and evaluate per config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--save-checkpoint", default=None,
                   help="also write final parameters (first replicate seed)")
    _add_seed(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("attack", help="run configured attacks only")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None,
                   help="parameters to attack for at=trained specs")
    _add_seed(p)
    p.set_defaults(fn=_cmd_attack)

    p = sub.add_parser("eval", help="score a checkpoint on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None)
    _add_seed(p)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sample-vmf", help="dump direction-noise samples to CSV")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=_cmd_sample_vmf)

    p = sub.add_parser("check-grad", help="finite-difference audit of backprop")
    p.add_argument("--arch", choices=("mlp", "lenet"), default="mlp")
    p.add_argument("--image-size", type=int, default=16)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--num-coords", type=int, default=200)
    p.add_argument("--all-coords", action="store_true")
    _add_seed(p)
    p.set_defaults(fn=_cmd_check_grad)

    p = sub.add_parser("report", help="combine run directories into grids")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("verify", help="re-run a directory's config and diff")
    p.add_argument("--run", required=True)
    p.set_defaults(fn=_cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.backend_info:
        print(f"backend: {backend.backend_name()} (compiled available: {backend.HAVE_COMPILED})")
        return EXIT_OK
    if not getattr(args, "command", None):
        ap.print_help()
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except harness.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except data.DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
