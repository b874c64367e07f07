"""CLI tests: every subcommand in-process through main(), plus the
exit-code contract (0 ok, 2 config error, 3 data error)."""

import numpy as np
import pytest

from dirdp.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from dirdp.reporting import read_csv, read_json

from conftest import write_idx_images, write_idx_labels

CONFIG_TEXT = """
name: clidemo
dataset:
  kind: synthetic
  image_size: 6
  n_train: 24
  n_test: 12
  classes: 3
model:
  arch: mlp
  hidden_dim: 8
training:
  epochs: 1
  lot_size: 8
  lr: 0.3
  sampling: cyclic
attacks:
  - method: dlg
    images: 1
    iterations: 3
    hvp_mode: analytic_mlp
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(CONFIG_TEXT)
    return str(path)


def test_no_command_prints_help(capsys):
    assert main([]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().out.lower()


def test_backend_info(capsys):
    assert main(["--backend-info"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "backend:" in out


def test_missing_seed_is_usage_error(config_path, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", config_path, "--out", str(tmp_path / "o")])
    assert exc.value.code == 2


def test_run_command(config_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", config_path, "--out", str(out), "--seed", "1"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "accuracy" in text
    assert (out / "results.json").exists()
    record = read_json(out / "results.json")
    assert record["name"] == "clidemo"


def test_train_command_with_checkpoint(config_path, tmp_path, capsys):
    out = tmp_path / "train"
    ckpt = tmp_path / "model.ckpt"
    rc = main(["train", "--config", config_path, "--out", str(out),
               "--seed", "2", "--save-checkpoint", str(ckpt)])
    assert rc == EXIT_OK
    assert ckpt.exists()
    # train skips attacks: only training outputs present
    assert (out / "accuracy.csv").exists()
    _, rows = read_csv(out / "attacks.csv")
    assert rows == []

    evout = tmp_path / "eval"
    rc = main(["eval", "--config", config_path, "--checkpoint", str(ckpt),
               "--seed", "2", "--out", str(evout)])
    assert rc == EXIT_OK
    text = capsys.readouterr().out
    assert "top-1 accuracy" in text
    header, rows = read_csv(evout / "eval.csv")
    assert header == ["k", "accuracy"]
    assert [r[0] for r in rows] == ["1", "3"]


def test_attack_command(config_path, tmp_path, capsys):
    out = tmp_path / "att"
    rc = main(["attack", "--config", config_path, "--out", str(out), "--seed", "3"])
    assert rc == EXIT_OK
    assert "ssim" in capsys.readouterr().out
    assert (out / "attacks.csv").exists()


def test_sample_vmf_command(tmp_path, capsys):
    out = tmp_path / "samples.csv"
    rc = main(["sample-vmf", "--dim", "3", "--epsilon", "5.0", "--n", "500",
               "--out", str(out), "--seed", "4"])
    assert rc == EXIT_OK
    assert "mean resultant length" in capsys.readouterr().out
    header, rows = read_csv(out)
    assert header == ["x0", "x1", "x2"]
    assert len(rows) == 500
    norms = np.linalg.norm(np.array(rows, dtype=float), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)


def test_sample_vmf_validation(tmp_path, capsys):
    rc = main(["sample-vmf", "--dim", "1", "--epsilon", "5.0",
               "--out", str(tmp_path / "s.csv"), "--seed", "0"])
    assert rc == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_check_grad_command(capsys):
    rc = main(["check-grad", "--arch", "mlp", "--image-size", "6",
               "--hidden-dim", "8", "--num-coords", "40", "--seed", "5"])
    assert rc == EXIT_OK
    assert "OK" in capsys.readouterr().out


def test_report_and_verify_commands(config_path, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run", "--config", config_path, "--out", str(run), "--seed", "6"]) == EXIT_OK

    rep = tmp_path / "report"
    assert main(["report", "--runs", str(run), "--out", str(rep)]) == EXIT_OK
    assert (rep / "report.csv").exists()
    assert (rep / "attack_grid.csv").exists()

    assert main(["verify", "--run", str(run)]) == EXIT_OK
    assert "verification OK" in capsys.readouterr().out

    with open(run / "attacks.csv", "ab") as fh:
        fh.write(b"tampered\n")
    assert main(["verify", "--run", str(run)]) == 1
    assert "FAILED" in capsys.readouterr().err


def test_report_rejects_non_run_dir(tmp_path, capsys):
    rc = main(["report", "--runs", str(tmp_path), "--out", str(tmp_path / "rep")])
    assert rc == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("dataset: {kind: nosuch}\n")
    rc = main(["run", "--config", str(bad), "--out", str(tmp_path / "o"), "--seed", "1"])
    assert rc == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_data_error_exit(tmp_path, capsys):
    # well-formed config pointing at a corrupt IDX file: data error (3)
    gen = np.random.default_rng(0)
    ip = tmp_path / "imgs.idx"
    write_idx_images(ip, gen.integers(0, 256, size=(4, 6, 6), dtype=np.uint8),
                     magic=0x00000999)
    lp = tmp_path / "labs.idx"
    write_idx_labels(lp, np.zeros(4, dtype=np.uint8))
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "dataset:\n"
        f"  kind: mnist\n  images: {ip}\n  labels: {lp}\n"
        f"  test_images: {ip}\n  test_labels: {lp}\n"
        "  n_train: 2\n  n_test: 2\n"
        "training: {epochs: 1, lot_size: 2, lr: 0.1}\n")
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "1"])
    assert rc == EXIT_DATA
    assert "data error" in capsys.readouterr().err
