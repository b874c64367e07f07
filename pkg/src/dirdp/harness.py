"""Experiment orchestration: config, train, attack, score, persist.

One config file describes one experiment cell: a dataset, a model, a
training recipe, and a list of attacks to run against the dummy-weight
or trained parameters. Replicates rerun the cell with consecutive
seeds. Grids over mechanisms or privacy levels are separate cells whose
output directories are later combined by ``emit_report``.

On-disk layout of a run directory:

* ``results.json``   record: config, hash, seeds, metric summaries,
  wall-clock timings (the only non-deterministic content)
* ``accuracy.csv``   per (replicate, epoch) train loss / test accuracy
* ``topk.csv``       final top-k accuracies per replicate
* ``attacks.csv``    per reconstructed image: losses, MSE, SSIM
* ``trace.jsonl``    raw per-epoch training trace
* ``images/``        ground truth and reconstruction PGMs

Everything except the timings inside results.json is byte-reproducible
from (config, seed); ``verify_run`` re-runs a directory's embedded
config and diffs.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import attacks as attacks_mod
from . import backend, data, metrics, nets, reporting, training
from .mechanisms import RngStream

_CLS_DEFAULT = 10
# attack-target noising reuses the per-example noise namespace at steps
# no training run can reach (steps are capped at 2^24)
_ATTACK_STEP_BASE = (1 << 24) - 1


class ConfigError(Exception):
    """Invalid experiment configuration."""


@dataclass
class AttackSpec:
    method: str
    images: int = 10
    iterations: int = 1000
    lr: float | None = None
    alpha_tv: float = attacks_mod.DEFAULT_ALPHA_TV
    hvp_mode: str = "finite_diff"
    fd_step: float = 1e-5
    init: str = "uniform_random"
    at: str = "init"  # init | trained
    mechanism: str = "none"  # noise applied to the target gradient
    epsilon_v: float = 0.0
    sigma: float = 0.0
    clip_norm: float | None = 1.0  # None: use each gradient's own norm
    halve_epsilon: bool = False

    def __post_init__(self):
        if self.at not in ("init", "trained"):
            raise ConfigError(f"attack 'at' must be init or trained, got {self.at!r}")
        if self.mechanism not in ("none", "gaussian", "vmf"):
            raise ConfigError(f"unknown attack target mechanism {self.mechanism!r}")
        if not 1 <= self.images <= 50:
            raise ConfigError("attack image budget must be between 1 and 50")
        try:
            self.to_attack_config()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def to_attack_config(self) -> attacks_mod.AttackConfig:
        return attacks_mod.AttackConfig(
            method=self.method, iterations=self.iterations, lr=self.lr,
            alpha_tv=self.alpha_tv, hvp_mode=self.hvp_mode, fd_step=self.fd_step,
            init=self.init)


@dataclass
class ExperimentConfig:
    name: str
    dataset: dict
    model: dict
    training: training.TrainingConfig
    attacks: list = field(default_factory=list)
    replicates: int = 1

    def resolved(self) -> dict:
        """Plain-dict form used for hashing and embedding in results."""
        return {
            "name": self.name,
            "dataset": dict(self.dataset),
            "model": dict(self.model),
            "training": asdict(self.training),
            "attacks": [asdict(a) for a in self.attacks],
            "replicates": self.replicates,
        }


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing key {key!r} in {where}")
    return section[key]


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    name = str(raw.get("name", "experiment"))
    ds = dict(_require(raw, "dataset", "config"))
    kind = _require(ds, "kind", "dataset")
    if kind == "mnist":
        for key in ("images", "labels", "test_images", "test_labels"):
            path = _require(ds, key, "dataset")
            if not os.path.exists(path):
                raise ConfigError(f"dataset.{key}: no such file: {path}")
    elif kind == "synthetic":
        ds.setdefault("classes", _CLS_DEFAULT)
        ds.setdefault("channels", 1)
        ds.setdefault("contrast", 0.8)
        _require(ds, "image_size", "dataset")
    else:
        raise ConfigError(f"dataset.kind must be mnist or synthetic, got {kind!r}")
    for key in ("n_train", "n_test"):
        if int(_require(ds, key, "dataset")) < 1:
            raise ConfigError(f"dataset.{key} must be positive")
    model = dict(raw.get("model", {}))
    model.setdefault("arch", "mlp")
    if model["arch"] not in ("mlp", "lenet"):
        raise ConfigError(f"model.arch must be mlp or lenet, got {model['arch']!r}")
    model.setdefault("hidden_dim", 128)
    try:
        tcfg = training.TrainingConfig(**raw.get("training", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"training section: {e}") from e
    try:
        atk = [AttackSpec(**a) for a in raw.get("attacks", [])]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"attacks section: {e}") from e
    replicates = int(raw.get("replicates", 1))
    if replicates < 1:
        raise ConfigError("replicates must be positive")
    return ExperimentConfig(name=name, dataset=ds, model=model, training=tcfg,
                            attacks=atk, replicates=replicates)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from e
    return config_from_dict(raw)


def config_hash(cfg: ExperimentConfig, seed: int) -> str:
    blob = reporting.json_line({"config": cfg.resolved(), "seed": seed})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_dataset(cfg: ExperimentConfig, seed: int):
    """(x_train, y_train, x_test, y_test, image_shape, num_classes)."""
    ds = cfg.dataset
    n_train, n_test = int(ds["n_train"]), int(ds["n_test"])
    if ds["kind"] == "mnist":
        x_tr, y_tr = data.load_mnist_idx(ds["images"], ds["labels"],
                                         limit=n_train, resize_to=ds.get("resize_to"))
        x_te, y_te = data.load_mnist_idx(ds["test_images"], ds["test_labels"],
                                         limit=n_test, resize_to=ds.get("resize_to"))
        return x_tr, y_tr, x_te, y_te, x_tr.shape[1:], _CLS_DEFAULT
    size = int(ds["image_size"])
    x, y = data.synth_dataset(n_train + n_test, int(ds["classes"]), size,
                              int(ds.get("seed", seed)), channels=int(ds["channels"]),
                              contrast=float(ds["contrast"]))
    return (x[:n_train], y[:n_train], x[n_train:], y[n_train:],
            x.shape[1:], int(ds["classes"]))


def _init_model(cfg: ExperimentConfig, image_shape, num_classes: int,
                seed: int) -> nets.NetworkParams:
    h, w, c = image_shape
    stream = training.init_stream(seed)
    if cfg.model["arch"] == "mlp":
        return nets.init_mlp(h * w * c, int(cfg.model["hidden_dim"]), num_classes, stream)
    return nets.init_lenet(h, w, c, num_classes, stream)


def _privatize_target(g: np.ndarray, spec: AttackSpec, seed: int, attack_index: int,
                      image_index: int, slices: dict) -> np.ndarray:
    if spec.mechanism == "none":
        return g
    clip = spec.clip_norm if spec.clip_norm is not None else float(np.linalg.norm(g))
    if clip <= 0:
        clip = 1.0
    mcfg = training.TrainingConfig(
        epochs=1, lot_size=1, lr=1.0, clip_norm=clip, mechanism=spec.mechanism,
        sigma=spec.sigma, epsilon_v=spec.epsilon_v, halve_epsilon=spec.halve_epsilon)
    step = _ATTACK_STEP_BASE - attack_index
    return training.privatize_example_gradient(g, image_index, step, seed, mcfg, slices)


def _attack_block(cfg: ExperimentConfig, base_by_at: dict, x_tr, y_tr, image_shape,
                  rep: int, rseed: int, img_dir: str, attack_rows: list,
                  attack_metrics: dict) -> None:
    """Run every configured attack for one replicate, recording rows."""
    for ai, spec in enumerate(cfg.attacks):
        base = base_by_at[spec.at]
        slices = base.slices()
        acfg = spec.to_attack_config()
        for j in range(spec.images):
            truth = x_tr[j]
            label = int(y_tr[j])
            g = nets.per_example_grads(base, truth[None, ...], np.array([label]))[0]
            target = _privatize_target(g, spec, rseed, ai, j, slices)
            rng = RngStream(rseed, training.derive_counter(
                training.TAG_NOISE, _ATTACK_STEP_BASE - ai, (1 << 31) + j))
            report = attacks_mod.run_attack(base, target, image_shape, acfg, rng,
                                            true_label=label, ground_truth=truth)
            attack_metrics[ai]["ssim"].append(report.final_ssim)
            attack_metrics[ai]["mse"].append(report.final_mse)
            attack_rows.append((rep, ai, spec.method, spec.at, j, label,
                                -1 if report.label_estimate is None else report.label_estimate,
                                report.best_iteration, report.best_loss,
                                report.final_mse, report.final_ssim))
            grey = truth if truth.shape[-1] == 1 else truth.mean(axis=-1)
            recon = report.reconstructed
            recon = recon if recon.shape[-1] == 1 else recon.mean(axis=-1)
            reporting.save_pgm(os.path.join(img_dir, f"rep{rep}_att{ai}_img{j}_truth.pgm"), grey)
            reporting.save_pgm(os.path.join(img_dir, f"rep{rep}_att{ai}_img{j}_recon.pgm"),
                               np.clip(recon, 0.0, 1.0))


def _summarize_attacks(cfg: ExperimentConfig, attack_metrics: dict) -> list:
    out = []
    for ai, spec in enumerate(cfg.attacks):
        m = attack_metrics[ai]
        pair = metrics.summarize(zip(m["ssim"], m["mse"]))
        out.append({
            "attack": ai, "method": spec.method, "at": spec.at,
            "mechanism": spec.mechanism, "epsilon_v": spec.epsilon_v, "sigma": spec.sigma,
            "mean_ssim": pair.mean_ssim, "median_mse": pair.median_mse,
            "ssim": asdict(metrics.summarize_values(m["ssim"])),
            "mse": asdict(metrics.summarize_values(m["mse"])),
        })
    return out


def run_attacks(cfg: ExperimentConfig, seed: int, outdir, checkpoint_path=None) -> dict:
    """Attack-only cell: no training; 'trained' targets need a checkpoint."""
    outdir = str(outdir)
    img_dir = os.path.join(outdir, "images")
    os.makedirs(img_dir, exist_ok=True)
    if not cfg.attacks:
        raise ConfigError("attack run requested but the config has no attacks section")
    x_tr, y_tr, _, _, image_shape, num_classes = load_dataset(cfg, seed)
    needs_trained = any(spec.at == "trained" for spec in cfg.attacks)
    if needs_trained and checkpoint_path is None:
        raise ConfigError("an attack with at=trained needs --checkpoint")
    trained = nets.load_checkpoint(checkpoint_path) if checkpoint_path else None
    attack_rows = []
    attack_metrics: dict[int, dict[str, list]] = {
        i: {"ssim": [], "mse": []} for i in range(len(cfg.attacks))}
    seeds = [seed + r for r in range(cfg.replicates)]
    t0 = time.perf_counter()
    for rep, rseed in enumerate(seeds):
        dummy = _init_model(cfg, image_shape, num_classes, rseed)
        _attack_block(cfg, {"init": dummy, "trained": trained}, x_tr, y_tr, image_shape,
                      rep, rseed, img_dir, attack_rows, attack_metrics)
    reporting.write_csv(
        os.path.join(outdir, "attacks.csv"),
        ["rep", "attack", "method", "at", "image", "true_label", "label_estimate",
         "best_iteration", "best_loss", "mse", "ssim"], attack_rows)
    attack_summaries = _summarize_attacks(cfg, attack_metrics)
    record = {
        "name": cfg.name,
        "config": cfg.resolved(),
        "config_hash": config_hash(cfg, seed),
        "seed": seed,
        "seeds": seeds,
        "backend": backend.backend_name(),
        "attacks": attack_summaries,
        "timings": {"attack_seconds": time.perf_counter() - t0},
    }
    reporting.write_json(os.path.join(outdir, "results.json"), record)
    return record


def run_experiment(cfg: ExperimentConfig, seed: int, outdir) -> dict:
    """Execute one cell; writes the run directory, returns the record."""
    outdir = str(outdir)
    img_dir = os.path.join(outdir, "images")
    os.makedirs(img_dir, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    x_tr, y_tr, x_te, y_te, image_shape, num_classes = load_dataset(cfg, seed)
    timings["data_seconds"] = time.perf_counter() - t0
    seeds = [seed + r for r in range(cfg.replicates)]
    acc_rows, topk_rows, attack_rows, trace_rows = [], [], [], []
    attack_metrics: dict[int, dict[str, list]] = {
        i: {"ssim": [], "mse": []} for i in range(len(cfg.attacks))}
    final_accs = []
    train_time = attack_time = 0.0
    for rep, rseed in enumerate(seeds):
        params = _init_model(cfg, image_shape, num_classes, rseed)
        dummy = params.copy()
        t0 = time.perf_counter()
        params, trace = training.train(params, x_tr, y_tr, cfg.training, rseed,
                                       x_test=x_te, y_test=y_te)
        train_time += time.perf_counter() - t0
        for row in trace:
            trace_rows.append({"rep": rep, "epoch": row["epoch"], "steps": row["steps"],
                               "train_loss": row["train_loss"],
                               "test_accuracy": row.get("test_accuracy")})
            acc_rows.append((rep, row["epoch"], row["train_loss"],
                             row.get("test_accuracy", float("nan"))))
        logits = nets.forward(params, x_te)
        final_accs.append(metrics.accuracy(logits, y_te))
        for k in (1, 3, 5):
            if k <= num_classes:
                topk_rows.append((rep, k, metrics.top_k_accuracy(logits, y_te, k)))
        t0 = time.perf_counter()
        _attack_block(cfg, {"init": dummy, "trained": params}, x_tr, y_tr, image_shape,
                      rep, rseed, img_dir, attack_rows, attack_metrics)
        attack_time += time.perf_counter() - t0
    timings["train_seconds"] = train_time
    timings["attack_seconds"] = attack_time
    reporting.write_csv(os.path.join(outdir, "accuracy.csv"),
                        ["rep", "epoch", "train_loss", "test_accuracy"], acc_rows)
    reporting.write_csv(os.path.join(outdir, "topk.csv"),
                        ["rep", "k", "accuracy"], topk_rows)
    reporting.write_csv(
        os.path.join(outdir, "attacks.csv"),
        ["rep", "attack", "method", "at", "image", "true_label", "label_estimate",
         "best_iteration", "best_loss", "mse", "ssim"], attack_rows)
    reporting.write_jsonl(os.path.join(outdir, "trace.jsonl"), trace_rows)
    acc_summary = metrics.summarize_values(final_accs)
    attack_summaries = _summarize_attacks(cfg, attack_metrics)
    record = {
        "name": cfg.name,
        "config": cfg.resolved(),
        "config_hash": config_hash(cfg, seed),
        "seed": seed,
        "seeds": seeds,
        "backend": backend.backend_name(),
        "accuracy": asdict(acc_summary),
        "attacks": attack_summaries,
        "timings": timings,
    }
    reporting.write_json(os.path.join(outdir, "results.json"), record)
    return record


def _comparable_files(outdir: str) -> list[str]:
    names = [n for n in ("accuracy.csv", "topk.csv", "attacks.csv", "trace.jsonl")
             if os.path.exists(os.path.join(outdir, n))]
    img_dir = os.path.join(outdir, "images")
    if os.path.isdir(img_dir):
        names += sorted(os.path.join("images", f) for f in os.listdir(img_dir))
    return names


def verify_run(outdir) -> list[str]:
    """Re-run a directory's embedded config; returns mismatched files."""
    outdir = str(outdir)
    record = reporting.read_json(os.path.join(outdir, "results.json"))
    cfg = config_from_dict(record["config"])
    mismatches = []
    with tempfile.TemporaryDirectory(prefix="dirdp-verify-") as tmp:
        runner = run_experiment if "accuracy" in record else run_attacks
        fresh = runner(cfg, int(record["seed"]), tmp)
        for rel in set(_comparable_files(outdir)) | set(_comparable_files(tmp)):
            a, b = os.path.join(outdir, rel), os.path.join(tmp, rel)
            if not (os.path.exists(a) and os.path.exists(b)):
                mismatches.append(rel)
                continue
            with open(a, "rb") as fa, open(b, "rb") as fb:
                if fa.read() != fb.read():
                    mismatches.append(rel)
    old = dict(record)
    old.pop("timings", None)
    new = dict(fresh)
    new.pop("timings", None)
    if reporting.json_line(old) != reporting.json_line(new):
        mismatches.append("results.json")
    return sorted(mismatches)


def emit_report(run_dirs, out_dir) -> dict:
    """Combine run directories into grid CSVs and reconstruction images.

    Writes report.csv (one row per cell: accuracy summary keyed by
    mechanism and privacy level), attack_grid.csv (one row per attack
    cell with SSIM/MSE summaries), copies every reconstruction into
    report_images/ (one file per image and setting), and one horizontal
    strip per attack setting into strips/.
    """
    out_dir = str(out_dir)
    img_out = os.path.join(out_dir, "report_images")
    strip_out = os.path.join(out_dir, "strips")
    os.makedirs(img_out, exist_ok=True)
    os.makedirs(strip_out, exist_ok=True)
    acc_rows, attack_rows = [], []
    n_images = 0
    for run in run_dirs:
        record = reporting.read_json(os.path.join(str(run), "results.json"))
        t = record["config"]["training"]
        if "accuracy" in record:
            acc = record["accuracy"]
            acc_rows.append((record["name"], record["config"]["model"]["arch"],
                             t["mechanism"], t["epsilon_v"], t["sigma"], record["seed"],
                             len(record["seeds"]),
                             acc["mean"], acc["std"], acc["min"], acc["max"]))
        for a in record["attacks"]:
            attack_rows.append((record["name"], a["method"], a["at"], a["mechanism"],
                                a["epsilon_v"], a["sigma"],
                                a["mean_ssim"], a["ssim"]["std"],
                                a["median_mse"], a["mse"]["mean"]))
        img_dir = os.path.join(str(run), "images")
        if not os.path.isdir(img_dir):
            continue
        by_attack: dict[str, list[str]] = {}
        for fname in sorted(os.listdir(img_dir)):
            if fname.endswith("_recon.pgm"):
                dst = f"{record['name']}_{fname}"
                with open(os.path.join(img_dir, fname), "rb") as fh:
                    reporting._atomic_write_bytes(os.path.join(img_out, dst), fh.read())
                n_images += 1
                key = fname.split("_img")[0]
                by_attack.setdefault(key, []).append(os.path.join(img_dir, fname))
        for key, files in by_attack.items():
            strip = reporting.image_strip([reporting.load_pgm(f) for f in files])
            reporting.save_pgm(os.path.join(strip_out, f"{record['name']}_{key}.pgm"), strip)
    reporting.write_csv(os.path.join(out_dir, "report.csv"),
                        ["name", "arch", "mechanism", "epsilon_v", "sigma", "seed",
                         "replicates", "acc_mean", "acc_std", "acc_min", "acc_max"], acc_rows)
    reporting.write_csv(os.path.join(out_dir, "attack_grid.csv"),
                        ["name", "method", "at", "mechanism", "epsilon_v", "sigma",
                         "ssim_mean", "ssim_std", "mse_median", "mse_mean"], attack_rows)
    return {"cells": len(acc_rows), "attack_cells": len(attack_rows), "images": n_images}
