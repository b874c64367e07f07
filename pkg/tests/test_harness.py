"""Experiment-harness tests: config parsing, end-to-end runs on tiny
cells, the rerun verifier, and report assembly."""

import os

import numpy as np
import pytest

from dirdp.harness import (
    AttackSpec,
    ConfigError,
    config_from_dict,
    config_hash,
    emit_report,
    load_config,
    load_dataset,
    run_attacks,
    run_experiment,
    verify_run,
)
from dirdp.nets import init_mlp, save_checkpoint
from dirdp.mechanisms import RngStream
from dirdp.reporting import read_csv, read_json, read_jsonl

from conftest import write_idx_images, write_idx_labels


def _raw_config():
    return {
        "name": "tiny",
        "dataset": {"kind": "synthetic", "image_size": 6, "n_train": 24,
                    "n_test": 12, "classes": 3},
        "model": {"arch": "mlp", "hidden_dim": 8},
        "training": {"epochs": 2, "lot_size": 8, "lr": 0.3, "sampling": "cyclic"},
        "attacks": [{"method": "dlg", "images": 2, "iterations": 4,
                     "hvp_mode": "analytic_mlp"}],
        "replicates": 2,
    }


def test_config_from_dict_defaults():
    cfg = config_from_dict(_raw_config())
    assert cfg.name == "tiny"
    assert cfg.dataset["channels"] == 1
    assert cfg.dataset["contrast"] == 0.8
    assert cfg.model["arch"] == "mlp"
    assert cfg.training.epochs == 2
    assert cfg.replicates == 2
    assert cfg.attacks[0].method == "dlg"


def test_config_errors():
    with pytest.raises(ConfigError):
        config_from_dict([])
    raw = _raw_config()
    del raw["dataset"]
    with pytest.raises(ConfigError, match="dataset"):
        config_from_dict(raw)
    for mutate, msg in (
        (lambda r: r["dataset"].update(kind="imagenet"), "kind"),
        (lambda r: r["dataset"].update(n_train=0), "n_train"),
        (lambda r: r["dataset"].pop("image_size"), "image_size"),
        (lambda r: r["model"].update(arch="resnet"), "arch"),
        (lambda r: r["training"].update(mechanism="laplace"), "training"),
        (lambda r: r["training"].update(bogus_key=1), "training"),
        (lambda r: r["attacks"][0].update(method="gan"), "attack method"),
        (lambda r: r.update(replicates=0), "replicates"),
    ):
        raw = _raw_config()
        mutate(raw)
        with pytest.raises(ConfigError, match=msg):
            config_from_dict(raw)


def test_config_mnist_paths_must_exist(tmp_path):
    raw = _raw_config()
    raw["dataset"] = {"kind": "mnist", "images": str(tmp_path / "i.idx"),
                      "labels": str(tmp_path / "l.idx"),
                      "test_images": str(tmp_path / "ti.idx"),
                      "test_labels": str(tmp_path / "tl.idx"),
                      "n_train": 4, "n_test": 2}
    with pytest.raises(ConfigError, match="no such file"):
        config_from_dict(raw)


def test_attack_spec_validation():
    AttackSpec(method="iga")
    for kwargs in (dict(method="gan"), dict(method="dlg", at="epoch3"),
                   dict(method="dlg", mechanism="laplace"),
                   dict(method="dlg", images=0), dict(method="dlg", images=51),
                   dict(method="dlg", iterations=0)):
        with pytest.raises(ConfigError):
            AttackSpec(**kwargs)


def test_load_config_yaml(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(
        "name: yam\n"
        "dataset: {kind: synthetic, image_size: 6, n_train: 8, n_test: 4}\n"
        "training: {epochs: 1, lot_size: 4, lr: 0.1}\n")
    cfg = load_config(path)
    assert cfg.name == "yam"
    assert cfg.dataset["classes"] == 10
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: [unclosed\n")
    with pytest.raises(ConfigError, match="parse"):
        load_config(bad)


def test_config_hash_sensitivity():
    cfg = config_from_dict(_raw_config())
    assert config_hash(cfg, 1) == config_hash(cfg, 1)
    assert config_hash(cfg, 1) != config_hash(cfg, 2)
    raw = _raw_config()
    raw["training"]["lr"] = 0.31
    assert config_hash(config_from_dict(raw), 1) != config_hash(cfg, 1)


def test_load_dataset_split_sizes():
    cfg = config_from_dict(_raw_config())
    x_tr, y_tr, x_te, y_te, shape, classes = load_dataset(cfg, 0)
    assert x_tr.shape == (24, 6, 6, 1)
    assert x_te.shape == (12, 6, 6, 1)
    assert shape == (6, 6, 1)
    assert classes == 3
    assert y_tr.shape == (24,) and y_te.shape == (12,)


def test_load_dataset_mnist_kind(tmp_path):
    gen = np.random.default_rng(0)
    paths = {}
    for key, n in (("images", 10), ("test_images", 6)):
        p = tmp_path / f"{key}.idx"
        write_idx_images(p, gen.integers(0, 256, size=(n, 8, 8), dtype=np.uint8))
        paths[key] = str(p)
    for key, n in (("labels", 10), ("test_labels", 6)):
        p = tmp_path / f"{key}.idx"
        write_idx_labels(p, (np.arange(n) % 10).astype(np.uint8))
        paths[key] = str(p)
    raw = _raw_config()
    raw["dataset"] = {"kind": "mnist", "n_train": 8, "n_test": 4, **paths}
    cfg = config_from_dict(raw)
    x_tr, y_tr, x_te, y_te, shape, classes = load_dataset(cfg, 0)
    assert x_tr.shape == (8, 8, 8, 1)
    assert x_te.shape == (4, 8, 8, 1)
    assert classes == 10


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("run")
    cfg = config_from_dict(_raw_config())
    record = run_experiment(cfg, seed=5, outdir=outdir)
    return outdir, cfg, record


def test_run_experiment_outputs(tiny_run):
    outdir, cfg, record = tiny_run
    for name in ("accuracy.csv", "topk.csv", "attacks.csv", "trace.jsonl", "results.json"):
        assert os.path.exists(os.path.join(outdir, name)), name
    assert record["seeds"] == [5, 6]
    assert record["config_hash"] == config_hash(cfg, 5)
    assert 0.0 <= record["accuracy"]["mean"] <= 1.0
    assert record["accuracy"]["count"] == 2
    assert len(record["attacks"]) == 1
    a = record["attacks"][0]
    assert a["method"] == "dlg" and a["mechanism"] == "none"
    assert set(record["timings"]) == {"data_seconds", "train_seconds", "attack_seconds"}


def test_run_experiment_csv_contents(tiny_run):
    outdir, _, record = tiny_run
    header, rows = read_csv(os.path.join(outdir, "accuracy.csv"))
    assert header == ["rep", "epoch", "train_loss", "test_accuracy"]
    assert len(rows) == 4  # 2 reps x 2 epochs
    header, rows = read_csv(os.path.join(outdir, "attacks.csv"))
    assert len(rows) == 4  # 2 reps x 1 attack x 2 images
    trace = read_jsonl(os.path.join(outdir, "trace.jsonl"))
    assert [t["rep"] for t in trace] == [0, 0, 1, 1]
    disk = read_json(os.path.join(outdir, "results.json"))
    assert disk["config_hash"] == record["config_hash"]
    # one truth and one recon per (rep, attack, image)
    images = sorted(os.listdir(os.path.join(outdir, "images")))
    assert len(images) == 8


def test_verify_run_clean_then_tampered(tiny_run, tmp_path):
    outdir, _, _ = tiny_run
    assert verify_run(outdir) == []
    victim = os.path.join(outdir, "attacks.csv")
    original = open(victim, "rb").read()
    try:
        with open(victim, "ab") as fh:
            fh.write(b"9,tampered\n")
        assert "attacks.csv" in verify_run(outdir)
    finally:
        with open(victim, "wb") as fh:
            fh.write(original)


def test_run_attacks_only(tmp_path):
    raw = _raw_config()
    raw["replicates"] = 1
    cfg = config_from_dict(raw)
    record = run_attacks(cfg, seed=3, outdir=tmp_path)
    assert "accuracy" not in record
    assert os.path.exists(tmp_path / "attacks.csv")
    assert not os.path.exists(tmp_path / "accuracy.csv")
    assert record["attacks"][0]["method"] == "dlg"


def test_run_attacks_requires_attacks_section(tmp_path):
    raw = _raw_config()
    raw["attacks"] = []
    cfg = config_from_dict(raw)
    with pytest.raises(ConfigError, match="no attacks"):
        run_attacks(cfg, seed=0, outdir=tmp_path)


def test_run_attacks_trained_needs_checkpoint(tmp_path):
    raw = _raw_config()
    raw["attacks"][0]["at"] = "trained"
    cfg = config_from_dict(raw)
    with pytest.raises(ConfigError, match="checkpoint"):
        run_attacks(cfg, seed=0, outdir=tmp_path)
    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(init_mlp(36, 8, 3, RngStream(0)), ckpt)
    record = run_attacks(cfg, seed=0, outdir=tmp_path / "out", checkpoint_path=ckpt)
    assert record["attacks"][0]["at"] == "trained"


def test_emit_report_counts(tiny_run, tmp_path):
    outdir, _, record = tiny_run
    stats = emit_report([outdir], tmp_path)
    assert stats["cells"] == 1
    assert stats["attack_cells"] == 1
    assert stats["images"] == 4  # 2 reps x 1 attack x 2 images, recon only
    header, rows = read_csv(tmp_path / "report.csv")
    assert len(rows) == 1
    assert float(rows[0][header.index("acc_mean")]) == record["accuracy"]["mean"]
    header, rows = read_csv(tmp_path / "attack_grid.csv")
    assert len(rows) == 1
    assert float(rows[0][header.index("ssim_mean")]) == record["attacks"][0]["mean_ssim"]
    strips = os.listdir(tmp_path / "strips")
    assert len(strips) == 2  # one strip per (rep, attack)


def test_emit_report_attack_only_dir(tmp_path):
    raw = _raw_config()
    raw["replicates"] = 1
    cfg = config_from_dict(raw)
    rundir = tmp_path / "arun"
    run_attacks(cfg, seed=11, outdir=rundir)
    stats = emit_report([rundir], tmp_path / "rep")
    assert stats["cells"] == 0
    assert stats["attack_cells"] == 1
    assert stats["images"] == 2
