import json

import pytest

from gaecluster.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def dataset(tmp_path, capsys):
    data = tmp_path / "data"
    code, _, _ = run(capsys, "synth", "--out-dir", str(data), "--n-companies", "18", "--n-articles", "400",
                     "--n-days", "40", "--k-planted", "3", "--seed", "1")
    assert code == 0
    cfg = {
        "cooc": str(data / "cooc.csv"),
        "prices": [str(data / "prices.csv")],
        "labels": str(data / "labels.csv"),
        "k_clusters": 3,
        "kmeans_restarts": 4,
        "epochs": 10,
        "train": {"hidden_dims": [8], "out_dim": 4, "max_epochs": 12, "stop_threshold_epochs": 5, "stop_window_n": 2},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_synth_build_train_eval(tmp_path, capsys, dataset):
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "build", "--config", str(dataset), "--out-dir", str(out))
    assert code == 0
    counts = json.loads(stdout)
    assert counts["nodes"] == 18
    assert counts["edges_thresholded"] <= counts["edges_raw"]
    assert counts["sectors"] == 3 and counts["articles"] == 400
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["counts"] == counts

    code, stdout, _ = run(capsys, "train-eval", "--config", str(dataset), "--out-dir", str(out), "--mode", "edges_only")
    assert code == 0
    metrics = json.loads(stdout)
    assert metrics["mode"] == "edges_only"
    for name in ("metrics.json", "history.csv", "model.json", "clusters.csv", "coords.csv", "sectors.json"):
        assert (out / "edges_only" / name).is_file()
    assert (out / "edges_only" / "history.csv").read_text().splitlines()[0] == "epoch,train_loss,val_loss,val_ap"


def test_metrics_schema_stable_across_modes(tmp_path, capsys, dataset):
    out = tmp_path / "run"
    run(capsys, "build", "--config", str(dataset), "--out-dir", str(out))
    keys = set()
    for mode in ("full", "edges_only", "features_only"):
        code, stdout, _ = run(capsys, "evaluate", "--config", str(dataset), "--out-dir", str(out), "--mode", mode)
        assert code == 0
        keys.add(frozenset(json.loads(stdout)))
    assert len(keys) == 1


def test_cv_then_train_eval_uses_choice(tmp_path, capsys, dataset):
    out = tmp_path / "run"
    run(capsys, "build", "--config", str(dataset), "--out-dir", str(out))
    code, stdout, _ = run(capsys, "cv", "--config", str(dataset), "--out-dir", str(out), "--folds", "2")
    assert code == 0
    choice = json.loads(stdout)
    report = json.loads((out / "cv_report.json").read_text())
    assert len(report) == 1
    code, stdout, _ = run(capsys, "train-eval", "--config", str(dataset), "--out-dir", str(out))
    assert json.loads(stdout)["epochs"] == choice["mean_epochs"]
    code, stdout, _ = run(capsys, "train-eval", "--config", str(dataset), "--out-dir", str(out), "--epochs", "3")
    assert json.loads(stdout)["epochs"] == 3


def test_byte_identical_reruns(tmp_path, capsys, dataset):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run(capsys, "build", "--config", str(dataset), "--out-dir", str(out))
        run(capsys, "cv", "--config", str(dataset), "--out-dir", str(out), "--folds", "2")
        run(capsys, "train-eval", "--config", str(dataset), "--out-dir", str(out))
        outputs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    assert outputs[0] == outputs[1]


def test_ablate(tmp_path, capsys, dataset):
    out = tmp_path / "run"
    run(capsys, "build", "--config", str(dataset), "--out-dir", str(out))
    code, stdout, _ = run(capsys, "ablate", "--config", str(dataset), "--out-dir", str(out), "--seeds", "2")
    assert code == 0
    assert set(json.loads(stdout)) == {"full", "edges_only", "features_only"}
    assert json.loads((out / "ablation.json").read_text())["seeds"] == [0, 1]


def test_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "build", "--cooc", str(tmp_path / "nope.csv"), "--prices", "p.csv", "--labels", "l.csv",
                       "--out-dir", str(tmp_path))
    assert code == 2
    assert "nope.csv" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "build", "--config", str(bad))[0] == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"colour": 1}))
    assert run(capsys, "build", "--config", str(unknown))[0] == 2
    assert run(capsys, "train-eval", "--out-dir", str(tmp_path / "empty"))[0] == 2


def test_validation_failure_exits_one(tmp_path, capsys):
    (tmp_path / "c.csv").write_text("AAA,1,2\n")
    (tmp_path / "p.csv").write_text("ticker,date,close\nAAA,2007-01-02,1\n")
    (tmp_path / "l.csv").write_text("ticker,sector\nAAA,x\n")
    code, _, err = run(capsys, "build", "--cooc", str(tmp_path / "c.csv"), "--prices", str(tmp_path / "p.csv"),
                       "--labels", str(tmp_path / "l.csv"), "--out-dir", str(tmp_path / "o"))
    assert code == 1
    assert "c.csv" in err
