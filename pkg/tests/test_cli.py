import csv
import json

import pytest

from ihgcl.cli import main
from ihgcl.datasets import planted_hetero_graph
from ihgcl.graphdata import save_hetero_graph

CONFIG = {"d": 8, "batch_size": 64, "epochs": 4, "lr": 0.01, "early_stop_patience": 0, "seed": 11}


@pytest.fixture
def dataset(tmp_path):
    g = planted_hetero_graph(n_users=30, n_items=40, n_tags=8, n_clusters=3, seed=4)
    save_hetero_graph(g, tmp_path / "data")
    return tmp_path / "data"


@pytest.fixture
def run(tmp_path, dataset):
    out = tmp_path / "run"
    assert main(["prepare", "--data-dir", str(dataset), "--meta-paths", "UU,UATAU;AA,ATA", "--out", str(out)]) == 0
    return out


def write_config(path, **kw):
    path.write_text(json.dumps({**CONFIG, **kw}))
    return str(path)


def test_prepare_outputs(run):
    names = {p.name for p in run.iterdir()}
    assert {"train.tsv", "test.tsv", "run.json"} <= names
    assert {f"subgraph_{v}.tsv" for v in ("u1", "u2", "i1", "i2")} <= names
    meta = json.loads((run / "run.json").read_text())
    assert meta["views"]["u2"]["meta_path"] == "UATAU"
    for p in run.iterdir():
        assert b"\r" not in p.read_bytes()


def test_prepare_rerun_identical(tmp_path, dataset, run, capsys):
    before = {p.name: p.read_bytes() for p in run.iterdir()}
    assert main(["prepare", "--data-dir", str(dataset), "--meta-paths", "UU,UATAU;AA,ATA", "--out", str(run)]) == 0
    assert "reusing" in capsys.readouterr().out
    assert {p.name: p.read_bytes() for p in run.iterdir()} == before
    fresh = tmp_path / "fresh"
    main(["prepare", "--data-dir", str(dataset), "--meta-paths", "UU,UATAU;AA,ATA", "--out", str(fresh)])
    for name in before:
        assert (fresh / name).read_bytes() == before[name] or name == "run.json"


def test_prepare_refuses_other_inputs(dataset, run, capsys):
    code = main(["prepare", "--data-dir", str(dataset), "--meta-paths", "UU,UATAU;AA,ATA",
                 "--split-seed", "5", "--out", str(run)])
    assert code == 1 and "exists" in capsys.readouterr().err


def test_prepare_arity_is_usage_error(tmp_path, dataset, capsys):
    code = main(["prepare", "--data-dir", str(dataset), "--meta-paths", "UU;AA,ATA", "--out", str(tmp_path / "x")])
    assert code != 0 and "error" in capsys.readouterr().err


def test_prepare_unknown_relation(tmp_path, dataset, capsys):
    code = main(["prepare", "--data-dir", str(dataset), "--meta-paths", "UU,UXU;AA,ATA", "--out", str(tmp_path / "x")])
    assert code == 1


def test_train_evaluate_grid(tmp_path, run):
    cfg = write_config(tmp_path / "cfg.json")
    assert main(["train", "--run-dir", str(run), "--config", cfg]) == 0
    model = run / "model"
    log = (model / "train_log.csv").read_text().splitlines()
    assert log[0].startswith("epoch,") and len(log) == 1 + CONFIG["epochs"]
    assert main(["evaluate", "--checkpoint", str(model / "checkpoint.bin"), "--k", "5,10,20"]) == 0
    rows = list(csv.DictReader((model / "metrics.csv").open()))
    assert [(r["bucket"], r["K"]) for r in rows] == [("all", "5"), ("all", "10"), ("all", "20")]
    assert all(r["variant"] == "full" for r in rows)
    again = (model / "metrics.csv").read_bytes()
    main(["evaluate", "--checkpoint", str(model / "checkpoint.bin"), "--k", "5,10,20"])
    assert (model / "metrics.csv").read_bytes() == again
    main(["evaluate", "--checkpoint", str(model / "checkpoint.bin"), "--buckets", "4", "--out", str(tmp_path / "b.csv")])
    buckets = {r["bucket"] for r in csv.DictReader((tmp_path / "b.csv").open())}
    assert "all" in buckets and len(buckets) > 1


def test_train_refuses_overwrite(tmp_path, run, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    assert main(["train", "--run-dir", str(run), "--config", cfg]) == 0
    assert main(["train", "--run-dir", str(run), "--config", cfg]) == 1
    assert "exists" in capsys.readouterr().err


def test_resume_matches_uninterrupted(tmp_path, run):
    full = write_config(tmp_path / "full.json", epochs=5)
    part = write_config(tmp_path / "part.json", epochs=3)
    assert main(["train", "--run-dir", str(run), "--config", full, "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--run-dir", str(run), "--config", part, "--out", str(tmp_path / "b")]) == 0
    assert main(["train", "--run-dir", str(run), "--config", full, "--out", str(tmp_path / "b"), "--resume"]) == 0
    assert (tmp_path / "a/train_log.csv").read_bytes() == (tmp_path / "b/train_log.csv").read_bytes()
    assert (tmp_path / "a/checkpoint.bin").read_bytes() == (tmp_path / "b/checkpoint.bin").read_bytes()
    for d in "ab":
        main(["evaluate", "--checkpoint", str(tmp_path / d / "checkpoint.bin")])
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


def test_resume_with_other_config_fails(tmp_path, run, capsys):
    cfg = write_config(tmp_path / "c.json")
    main(["train", "--run-dir", str(run), "--config", cfg, "--out", str(tmp_path / "m")])
    other = write_config(tmp_path / "o.json", d=16)
    assert main(["train", "--run-dir", str(run), "--config", other, "--out", str(tmp_path / "m"), "--resume"]) == 1
    assert "hash" in capsys.readouterr().err


def test_ablate_variant_column(tmp_path, run):
    cfg = write_config(tmp_path / "cfg.json")
    assert main(["ablate", "--run-dir", str(run), "--config", cfg, "--variant", "wo_ib"]) == 0
    rows = list(csv.DictReader((run / "ablate_wo_ib" / "metrics.csv").open()))
    assert rows and all(r["variant"] == "wo_ib" for r in rows)
    log = list(csv.DictReader((run / "ablate_wo_ib" / "train_log.csv").open()))
    assert all(float(r["loss_ib"]) == 0.0 for r in log)


def test_ablate_lightgcn(tmp_path, run):
    cfg = write_config(tmp_path / "cfg.json")
    assert main(["ablate", "--run-dir", str(run), "--config", cfg, "--variant", "lightgcn"]) == 0
    assert main(["export-edges", "--checkpoint", str(run / "ablate_lightgcn/checkpoint.bin"), "--node", "0"]) == 1


def test_unknown_variant_usage_error(tmp_path, run):
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--run-dir", str(run), "--variant", "wo_xyz"])
    assert exc.value.code == 2


def test_export_edges(tmp_path, run):
    cfg = write_config(tmp_path / "cfg.json")
    main(["train", "--run-dir", str(run), "--config", cfg])
    out = tmp_path / "edges.csv"
    assert main(["export-edges", "--checkpoint", str(run / "model/checkpoint.bin"), "--node", "0",
                 "--view", "u2", "--out", str(out)]) == 0
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "node_id,neighbor_id,pi,kept"
    for line in lines[1:]:
        node, nbr, pi, kept = line.split(",")
        assert node == "0" and int(nbr) != 0
        assert len(pi.split(".")[1]) == 6 and 0 < float(pi) < 1
        assert kept in ("0", "1") and (kept == "1") == (float(pi) >= 0.3)
    assert main(["export-edges", "--checkpoint", str(run / "model/checkpoint.bin"), "--node", "100000"]) == 1


def test_unknown_config_key(tmp_path, run, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"learning_rate": 0.1}))
    assert main(["train", "--run-dir", str(run), "--config", str(bad)]) == 1
    assert "unknown" in capsys.readouterr().err


def test_missing_prepare_artifacts(tmp_path, run, capsys):
    assert main(["train", "--run-dir", str(tmp_path / "nowhere")]) == 1
    (run / "subgraph_i2.tsv").unlink()
    assert main(["train", "--run-dir", str(run)]) == 1
    assert "subgraph_i2.tsv" in capsys.readouterr().err
    assert main(["evaluate", "--checkpoint", str(tmp_path / "none.bin")]) == 1


def test_threads_env(tmp_path, run, monkeypatch):
    cfg = write_config(tmp_path / "cfg.json", epochs=1)
    monkeypatch.setenv("IHGCL_THREADS", "1")
    assert main(["train", "--run-dir", str(run), "--config", cfg]) == 0
    monkeypatch.setenv("IHGCL_THREADS", "zero")
    assert main(["train", "--run-dir", str(run), "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_divergence_exit_code(tmp_path, run, monkeypatch):
    from ihgcl import trainer

    real = trainer.forward

    def broken(*a, **k):
        fw = real(*a, **k)
        fw.components["loss_bpr"] = float("inf")
        return fw

    monkeypatch.setattr(trainer, "forward", broken)
    cfg = write_config(tmp_path / "cfg.json")
    assert main(["train", "--run-dir", str(run), "--config", cfg]) == 3
