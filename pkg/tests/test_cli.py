import json
import subprocess
import sys

import numpy as np
import pytest

from mvgrasp import cli
from mvgrasp.dataset import load_samples, save_samples
from mvgrasp.network import build_network, save_network


@pytest.fixture(scope="module")
def files(tmp_path_factory, fixture8, box_scene):
    d = tmp_path_factory.mktemp("cli")
    save_samples(fixture8, d / "fx.mvgd")
    np.savetxt(d / "box.xyz", box_scene["cloud"].points)
    save_network(box_scene["net"], d / "box.mvgw")
    return d


def run(argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as e:
        return e.code


def test_help_succeeds(capsys):
    assert run(["--help"]) == 0
    assert "usage" in capsys.readouterr().out
    assert run(["grasp", "--help"]) == 0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mvgrasp", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "dataset-prep" in r.stdout


def test_unknown_subcommand_and_flag():
    assert run(["frobnicate"]) == 2
    assert run(["grasp", "--input", "a", "--weights", "b", "--bogus"]) == 2
    assert run(["eval", "--weights", "w.mvgw"]) == 2


def test_parse_grasp_spec():
    command, cfg = cli.parse_args(["grasp", "--input", "obj.pcd", "--weights", "w.mvgw"])
    assert command == "grasp"
    assert cfg["input"] == "obj.pcd" and cfg["weights"] == "w.mvgw"
    assert cfg["tau"] == 0.8 and cfg["l"] == 120 and cfg["seed"] == 0


def test_config_precedence(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('k = 3\nweights = "file.mvgw"\n[grasp]\ntau = 0.5\nl = 48\n')
    _, cfg = cli.parse_args(["grasp", "--config", str(p), "--input", "x.pcd", "--tau", "0.6"])
    assert cfg["tau"] == 0.6 and cfg["k"] == 3 and cfg["l"] == 48 and cfg["weights"] == "file.mvgw"
    p.write_text("colour = 1\n")
    assert run(["grasp", "--config", p, "--input", "x", "--weights", "y"]) == 2
    p.write_text("[nope]\nk = 1\n")
    assert run(["grasp", "--config", p, "--input", "x", "--weights", "y"]) == 2
    p.write_text("k = = 1\n")
    assert run(["grasp", "--config", p, "--input", "x", "--weights", "y"]) == 2


def test_dataset_root_from_environment(monkeypatch):
    monkeypatch.setenv("MVGRASP_DATA", "/data/cornell")
    _, cfg = cli.parse_args(["dataset-prep", "--out", "x.mvgd"])
    assert cfg["data_root"] == "/data/cornell"


def test_resolved_config_printed(files, tmp_path, capsys):
    assert run(["bench", "--out", tmp_path / "b.json", "--size", 24, "--iters", 3, "--warmup", 1, "--seed", 4]) == 0
    err = capsys.readouterr().err
    assert "seed=4" in err and '"iters": 3' in err


def test_dataset_prep_synthetic_and_split(tmp_path):
    root = tmp_path / "raw"
    code = run(["dataset-prep", "--data-root", root, "--synthetic", 5, "--out", tmp_path / "tr.mvgd",
                "--eval-out", tmp_path / "te.mvgd", "--ratio", 0.6, "--per-image", 2, "--size", 24, "--scale", 0.15])
    assert code == 0
    tr, te = load_samples(tmp_path / "tr.mvgd"), load_samples(tmp_path / "te.mvgd")
    assert len(tr) == 6 and len(te) == 4
    assert not {s.source_id for s in tr} & {s.source_id for s in te}
    assert tr[0].depth.shape == (24, 24)


def test_train_eval_infer_viz(files, tmp_path):
    w = tmp_path / "w.mvgw"
    assert run(["train", "--data", files / "fx.mvgd", "--out", w, "--epochs", 2, "--seed", 1, "--deterministic"]) == 0
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss" and len(lines) == 3
    assert run(["eval", "--weights", w, "--data", files / "fx.mvgd", "--out", tmp_path / "m.json",
                "--csv", tmp_path / "m.csv", "--deterministic"]) == 0
    m = json.loads((tmp_path / "m.json").read_text())
    assert m["n_total"] == 8 and m["mean_latency_ms"] is None
    out = tmp_path / "inf"
    code = run(["infer", "--weights", w, "--input", files / "fx.mvgd", "--index", 2, "--out", out, "--tau", 0.0])
    assert code == 0
    assert {p.name for p in out.iterdir()} >= {"quality.png", "angle.png", "width.png", "grasps.json", "grasp_map.npz"}
    assert len(json.loads((out / "grasps.json").read_text())) == 10
    assert run(["viz", "--input", out / "grasp_map.npz", "--out", tmp_path / "viz"]) == 0
    assert (tmp_path / "viz" / "quality.png").exists()
    assert run(["viz", "--input", files / "fx.mvgd", "--out", tmp_path / "s.png"]) == 0
    assert run(["viz", "--input", files / "box.xyz", "--out", tmp_path / "views"]) == 0
    assert len(list((tmp_path / "views").glob("view_*.png"))) == 3
    np.save(tmp_path / "a.npy", np.eye(4))
    assert run(["viz", "--input", tmp_path / "a.npy", "--out", tmp_path / "a.png"]) == 0
    np.save(tmp_path / "depth.npy", load_samples(files / "fx.mvgd")[0].depth)
    assert run(["infer", "--weights", w, "--input", tmp_path / "depth.npy", "--out", tmp_path / "inf2", "--tau", 0.0]) == 0
    assert run(["viz", "--input", tmp_path / "m.json", "--out", tmp_path / "x.png"]) == 3


def test_grasp_command_and_exit_codes(files, tmp_path, capsys):
    base = ["grasp", "--input", files / "box.xyz", "--weights", files / "box.mvgw", "--l", 48, "--w-max", 0.24]
    assert run(base + ["--out", tmp_path / "g.json", "--ranking-out", tmp_path / "r.json",
                       "--views-dir", tmp_path / "views", "--deterministic"]) == 0
    grasps = json.loads((tmp_path / "g.json").read_text())
    assert grasps and grasps[0]["quality"] >= 0.8
    assert json.loads((tmp_path / "r.json").read_text())["selected"] == grasps[0]["view"]
    capsys.readouterr()
    assert run(base) == 0
    assert json.loads(capsys.readouterr().out) == grasps
    assert run(base + ["--feasibility", "none"]) == 5
    (tmp_path / "bad.mvgw").write_bytes(b"nonsense")
    bad = ["grasp", "--input", files / "box.xyz", "--weights", tmp_path / "bad.mvgw"]
    assert run(bad) == 3
    assert run(["grasp", "--input", tmp_path / "missing.pcd", "--weights", files / "box.mvgw"]) == 3


def test_nan_weights_exit_numeric(files, tmp_path):
    net = build_network()
    for _, _, bn, _ in net.blocks:
        bn.stats.initialized = True
    net.parameters()["head_quality.b"][:] = np.nan
    save_network(net, tmp_path / "nan.mvgw")
    code = run(["grasp", "--input", files / "box.xyz", "--weights", tmp_path / "nan.mvgw", "--l", 48])
    assert code == 4


def test_bench_fifty_records(tmp_path):
    assert run(["bench", "--out", tmp_path / "b.json", "--size", 48, "--iters", 50, "--warmup", 2]) == 0
    stats = json.loads((tmp_path / "b.json").read_text())
    assert len(stats["records_ms"]) == 50
    assert stats["p95_ms"] <= stats["max_ms"] and stats["mean_ms"] > 0
