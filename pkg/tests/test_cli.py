import json
import os

import pytest

from hedgegad import SCHEMA_VERSION
from hedgegad.cli import main

TRAIN_FILES = ("config.json", "history.csv", "checkpoint.bin", "checkpoint.json", "split.csv",
               "embeddings.csv", "metrics.json")


@pytest.fixture
def graph_path(tmp_path):
    path = tmp_path / "g.json"
    rc = main(["csbm-gen", "--mu0", "0.5,0", "--mu1=-0.5,0", "--d", "10", "--h0", "0.9", "--h1", "0.1",
               "--n", "20", "--seed", "1", "--out", str(path)])
    assert rc == 0
    return path


def read_all(directory, names):
    return {n: open(os.path.join(directory, n), "rb").read() for n in names}


def test_version(capsys):
    assert main(["--version"]) == 0
    assert f"schema {SCHEMA_VERSION}" in capsys.readouterr().out


def test_unknown_flag_is_usage_error(capsys):
    assert main(["analyze", "--bogus"]) == 64
    assert "usage" in capsys.readouterr().err
    assert main(["frobnicate"]) == 64


def test_csbm_gen_outputs(graph_path, capsys):
    base = str(graph_path)[:-5]
    for suffix in (".json", ".rel0.tsv", ".features.tsv", ".labels.txt", ".oracle.json", ".out_neighbors.tsv"):
        assert os.path.exists(base + suffix)
    info = json.load(open(base + ".oracle.json"))
    assert info["oracle"]["theoretical_chv"] == pytest.approx(0.16)
    assert info["measured_chv_out_neighborhoods"] == pytest.approx(0.16, abs=1e-12)


def test_csbm_gen_bad_degree_exit_1(tmp_path):
    rc = main(["csbm-gen", "--mu0", "1,0", "--mu1", "0,1", "--d", "6", "--h0", "0.9", "--h1", "0.1",
               "--out", str(tmp_path / "x.json")])
    assert rc == 1


def test_analyze(graph_path, tmp_path, capsys):
    capsys.readouterr()
    out = tmp_path / "an"
    assert main(["analyze", str(graph_path), "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    for key in ("chv", "per_class_mean", "in_class_var", "mean_in_class_var", "weighted_mean"):
        assert key in report
    lines = (out / "density.csv").read_text().splitlines()
    assert lines[0] == "h,density" and len(lines) == 201


def test_analyze_missing_file_exit_1(tmp_path):
    assert main(["analyze", str(tmp_path / "nope.json")]) == 1


def test_attack_reports_chv(graph_path, tmp_path, capsys):
    capsys.readouterr()
    out = tmp_path / "att.json"
    assert main(["attack", "--kind", "heterophily", "--class", "1", "--ratio", "0.1", "--seed", "3",
                 str(graph_path), str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["chv_after"] > report["chv_before"]
    assert out.exists()


def test_train_bad_tau_names_field(graph_path, tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"tau": -1}))
    assert main(["train", "--config", str(cfg), str(graph_path), "--out", str(tmp_path / "r")]) == 1
    assert "tau" in capsys.readouterr().err


def test_train_eval_roundtrip(graph_path, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 10, "hidden_dim": 4, "pe_eigvecs": 2}))
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), str(graph_path), "--out", str(run)]) == 0
    for name in TRAIN_FILES + ("generated_edges.tsv", "timing.json"):
        assert (run / name).exists(), name
    metrics = json.loads((run / "metrics.json").read_text())
    assert "wall_clock_seconds" not in metrics
    capsys.readouterr()
    assert main(["eval", str(run)]) == 0
    scored = json.loads(capsys.readouterr().out)
    assert scored["auc"] == metrics["auc"]


def test_config_file_overrides_flags(graph_path, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "mlp", "epochs": 3, "seed": 5}))
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--model", "gcn", "--epochs", "9", "--seed", "1",
                 str(graph_path), "--out", str(run)]) == 0
    echo = json.loads((run / "config.json").read_text())
    assert echo["model"] == "mlp" and echo["epochs"] == 3 and echo["seed"] == 5
    assert len((run / "history.csv").read_text().splitlines()) == 4


@pytest.mark.parametrize("model", ["gcn", "sage", "mlp"])
def test_baseline_training_via_cli(graph_path, tmp_path, model):
    run = tmp_path / model
    assert main(["train", "--model", model, "--epochs", "5", str(graph_path), "--out", str(run)]) == 0
    assert not (run / "generated_edges.tsv").exists()
    assert main(["eval", str(run), "--split", "val"]) == 0


def test_gradcheck_exit_zero(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "max_rel_err" in out and out.strip().endswith("PASS")


def test_sweep_outputs(graph_path, tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"models": {"gcn": {"model": "gcn", "epochs": 5},
                                          "mlp": {"model": "mlp", "epochs": 5}},
                               "ratios": [0.0, 0.1], "seeds": [0, 1], "target_class": 1}))
    out = tmp_path / "sw"
    assert main(["sweep", str(graph_path), "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "ratio,seed,model,accuracy,auc,ap,chv" and len(rows) == 1 + 2 * 2 * 2
    assert len((out / "chv.csv").read_text().splitlines()) == 1 + 2 * 2


def test_rerun_is_byte_identical(graph_path, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 10, "hidden_dim": 4, "pe_eigvecs": 2, "seed": 3}))
    runs = []
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg), str(graph_path), "--out", str(tmp_path / name)]) == 0
        runs.append(read_all(tmp_path / name, TRAIN_FILES + ("generated_edges.tsv",)))
    assert runs[0] == runs[1]
