import json

import numpy as np
import pytest

from smoothadv.cli import run_cli
from smoothadv.data import load_idx
from smoothadv.formats import load_params, read_csv
from smoothadv.trainer import HISTORY_COLUMNS


def _write_config(path, **overrides):
    cfg = {
        "seed": 1,
        "network": {"hidden": [6]},
        "data": {"synthetic": {"n_per_class": 30, "dim": 4, "separation": 0.4, "n_test": 20}},
        "attack": {"epsilon": 0.1, "step_size": 0.03, "steps": 3},
        "train": {"epochs": 3, "batch_size": 16, "lr": 0.05},
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


def test_train_writes_outputs(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json",
                        diagnostics={"smoothness": True, "smoothness_samples": 8,
                                     "landscape": True, "landscape_samples": 8,
                                     "landscape_points": 3})
    out = tmp_path / "run"
    assert run_cli(["train", str(cfg), "-o", str(out)]) == 0
    for name in ("params.bin", "params_final.bin", "history.csv", "smoothness.csv",
                 "landscape.csv", "manifest.json"):
        assert (out / name).exists(), name
    sizes, _ = load_params(out / "params.bin")
    assert sizes == (4, 6, 2)
    header, rows = read_csv(out / "history.csv")
    assert header == list(HISTORY_COLUMNS) and len(rows) == 3
    assert all(np.isfinite(r["max_eig"]) for r in rows)
    assert len(read_csv(out / "landscape.csv")[1]) == 9
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["layer_sizes"] == [4, 6, 2]
    assert 0 <= manifest["best_epoch"] < 3
    assert "best epoch" in capsys.readouterr().out


def test_reduction_gives_byte_identical_params(tmp_path):
    at = _write_config(tmp_path / "at.json")
    psat = _write_config(tmp_path / "psat.json",
                         curriculum={"metric": "prob_gap",
                                     "schedule": {"kind": "constant", "value": 1.0}})
    assert run_cli(["train", str(at), "-o", str(tmp_path / "a")]) == 0
    assert run_cli(["train", str(psat), "-o", str(tmp_path / "b")]) == 0
    for name in ("params.bin", "params_final.bin", "history.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_eval_fresh_ten_class_net_is_chance(tmp_path, capsys):
    # A weak evaluation attack: a strong one legitimately pushes an untrained net below chance.
    cfg = _write_config(tmp_path / "c.json", network={"hidden": [16]},
                        eval_attack={"epsilon": 0.01, "step_size": 0.005, "steps": 3},
                        data={"synthetic": {"n_per_class": 100, "dim": 10, "separation": 0.3,
                                            "classes": 10, "n_test": 500}})
    assert run_cli(["eval", str(cfg), "--out", str(tmp_path / "e.json")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert abs(res["clean_acc"] - 0.1) <= 0.05 and abs(res["adv_acc"] - 0.1) <= 0.05
    assert json.loads((tmp_path / "e.json").read_text()) == res


def test_eval_landscape_probe_with_trained_params(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json")
    run_cli(["train", str(cfg), "-o", str(tmp_path / "run")])
    params = str(tmp_path / "run" / "params.bin")
    capsys.readouterr()
    assert run_cli(["eval", str(cfg), "--params", params, "--split", "train"]) == 0
    assert set(json.loads(capsys.readouterr().out)) == {"clean_acc", "adv_acc", "sum"}
    assert run_cli(["landscape", str(cfg), "--params", params, "--out",
                    str(tmp_path / "l.csv"), "--points", "3", "--samples", "5"]) == 0
    assert len(read_csv(tmp_path / "l.csv")[1]) == 9
    assert run_cli(["probe-hessian", str(cfg), "--params", params, "--out",
                    str(tmp_path / "p.csv"), "--samples", "4"]) == 0
    header, rows = read_csv(tmp_path / "p.csv")
    assert header[0] == "sample_id" and len(rows) == 4
    assert all(r["power_value"] >= 0 for r in rows)


def test_gen_data_then_train_from_idx(tmp_path):
    prefix = tmp_path / "d" / "train"
    assert run_cli(["gen-data", "--out-prefix", str(prefix), "--n-per-class", "20",
                    "--dim", "5", "--seed", "3"]) == 0
    ds = load_idx(f"{prefix}-images.idx", f"{prefix}-labels.idx")
    assert len(ds) == 40 and ds.dim == 5
    cfg = _write_config(tmp_path / "c.json", data={"idx": {
        "train_images": "d/train-images.idx", "train_labels": "d/train-labels.idx",
        "test_images": "d/train-images.idx", "test_labels": "d/train-labels.idx"}},
        network={"hidden": [4]}, train={"epochs": 1})
    assert run_cli(["train", str(cfg), "-o", str(tmp_path / "run")]) == 0
    assert load_params(tmp_path / "run" / "params.bin")[0] == (5, 4, 10)


def test_missing_config_exits_2(tmp_path, capsys):
    missing = tmp_path / "absent.json"
    assert run_cli(["train", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["eval"], ["gen-data"],
                                  ["gen-data", "--out-prefix", "x", "--classes", "1"]])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run_cli(argv) == 2


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json", optimizer="adam")
    assert run_cli(["train", str(cfg)]) == 2
    assert "optimizer" in capsys.readouterr().err
    late = _write_config(tmp_path / "late.json", curriculum={
        "metric": "prob_gap", "schedule": {"kind": "linear", "start_epoch": 0,
                                           "start_value": 0, "end_epoch": 2}})
    assert run_cli(["train", str(late)]) == 2


def test_mismatched_params_file(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json")
    run_cli(["train", str(cfg), "-o", str(tmp_path / "run")])
    other = _write_config(tmp_path / "o.json", network={"hidden": [3]})
    assert run_cli(["eval", str(other), "--params", str(tmp_path / "run" / "params.bin")]) == 2
    assert "do not match" in capsys.readouterr().err


def test_runtime_error_exits_1(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json")
    bad = tmp_path / "garbage.bin"
    bad.write_bytes(b"not a params file")
    assert run_cli(["eval", str(cfg), "--params", str(bad)]) == 1
    assert "FormatError" in capsys.readouterr().err


def test_version_flag(capsys):
    assert run_cli(["--version"]) == 0
