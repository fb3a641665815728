import json
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from kinesynth import data
from kinesynth.cli import main

TINY = [
    "data.toy_tasks=T02,T16", "data.toy_impairments=Control,Mild", "data.toy_per_class=5",
    "gan.epochs=3", "gan.batch_size=8", "gan.gen_filters=8,8", "gan.disc_filters=4,8",
    "gan.disc_features=16", "gan.mbd_kernels=4", "gan.mbd_dim=3", "gan.probe_size=6",
    "fcn.epochs=2", "fcn.conv1_filters=4", "fcn.conv2_filters=4", "fcn.dense_units=8",
    "tsne.perplexity=5", "tsne.iterations=60", "tsne.exaggeration_iters=20",
    "report.per_class=2", "report.max_classes=2",
]
ARTIFACT_SUFFIXES = {".csv", ".json", ".ini", ".ksn", ".md", ".svg"}


def run(*args, extra=()):
    argv = list(args)
    for item in [*TINY, *extra]:
        argv += ["--set", item]
    return main(argv)


def pipeline(root: Path) -> dict[str, int]:
    r = root
    codes = {
        "toy": run("make-toy-fixture", "--out", str(r / "toy")),
        "ingest": run("ingest", "--input", str(r / "toy" / "toy.csv"), "--out", str(r / "data"), "--expect", "20"),
        "gan": run("train-gan", "--data", str(r / "data"), "--out", str(r / "gan")),
        "generate": run("generate", "--model", str(r / "gan"), "--class", "T16/ModerateSevere",
                        "--n", "10", "--out", str(r / "syn")),
        "clf": run("train-clf", "--data", str(r / "data"), "--synthetic", str(r / "syn"), "--out", str(r / "clf")),
        "evaluate": run("evaluate", "--data", str(r / "data"), "--out", str(r / "eval")),
        "tsne": run("tsne", "--data", str(r / "data"), "--model", str(r / "gan"), "--out", str(r / "tsne")),
        "report": run("report", "--eval", str(r / "eval"), "--data", str(r / "data"), "--model", str(r / "gan"),
                      "--out", str(r / "report")),
    }
    return codes


def artifacts(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.suffix in ARTIFACT_SUFFIXES}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    a = tmp_path_factory.mktemp("a")
    b = tmp_path_factory.mktemp("b")
    return a, pipeline(a), b, pipeline(b)


def test_every_command_succeeds(runs):
    a, codes, _, codes_b = runs
    assert set(codes.values()) == {0}, codes
    assert set(codes_b.values()) == {0}, codes_b


def test_each_output_dir_echoes_config(runs):
    a = runs[0]
    for d in ("toy", "data", "gan", "syn", "clf", "eval", "tsne", "report"):
        text = (a / d / "config.resolved.ini").read_text()
        assert "[run]\nseed = 0\n" in text


def test_byte_identical_reruns(runs):
    a, _, b, _ = runs
    fa, fb = artifacts(a), artifacts(b)
    assert fa.keys() == fb.keys()
    assert len(fa) > 20
    differ = [k for k in fa if fa[k] != fb[k]]
    assert differ == []


def test_json_outputs_are_versioned(runs):
    a = runs[0]
    for p in a.rglob("*.json"):
        assert json.loads(p.read_text())["schema_version"] == 1, p


def test_ingest_summary(runs, capsys):
    summary = json.loads((runs[0] / "data" / "summary.json").read_text())
    assert summary["n_trials"] == 20
    assert summary["class_counts"] == {"T02/Control": 5, "T02/Mild": 5, "T16/Control": 5, "T16/Mild": 5}


def test_generate_labels_and_report(runs):
    a = runs[0]
    syn = data.ingest(a / "syn" / "synthetic.csv")
    assert len(syn) == 10
    assert {(t.task, t.impairment, t.provenance) for t in syn} == {("T16", "ModerateSevere", "synthetic")}
    rep = json.loads((a / "syn" / "hf_report.json").read_text())
    assert rep["n"] == 10 and len(rep["hf_power_ratio"]) == 10 and rep["filtered"] is True


def test_train_outputs(runs):
    a = runs[0]
    for d, stem in (("gan", "gan"), ("clf", "fcn")):
        assert (a / d / f"{stem}.ksn").exists() and (a / d / f"{stem}.json").exists()
        lines = (a / d / "train_log.csv").read_text().splitlines()
        assert len(lines) == 1 + (3 if d == "gan" else 2)


def test_evaluate_report(runs):
    a = runs[0]
    rep = json.loads((a / "eval" / "cv_report.json").read_text())
    assert set(rep["conditions"]) == {"real_only", "augmented"}
    for cond in rep["conditions"].values():
        assert set(cond["mean"]) == {"precision", "recall", "f1", "accuracy"}
        for fold in cond["folds"]:
            acc = fold["metrics"]["accuracy"]
            assert isinstance(acc, float) and 0.0 <= acc <= 1.0
            assert fold["metrics"]["recall"] == pytest.approx(acc, abs=1e-15)
    for name in ("real_only", "augmented"):
        assert (a / "eval" / f"confusion_{name}.csv").exists()
        ET.parse(a / "eval" / f"confusion_{name}.svg")


def test_tsne_outputs(runs):
    a = runs[0]
    lines = (a / "tsne" / "embedding.csv").read_text().splitlines()
    assert lines[0] == "x,y,task,impairment,provenance"
    assert len(lines) == 41
    assert sum(",synthetic" in ln for ln in lines) == 20
    ET.parse(a / "tsne" / "tsne.svg")


def test_report_table(runs):
    a = runs[0]
    rows = (a / "report" / "metrics_table.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows] == ["Metric", "Precision", "Recall", "F1 Score", "Accuracy"]
    root = ET.parse(a / "report" / "trajectories.svg").getroot()
    assert root.tag.endswith("svg")


def test_inputs_not_mutated(tmp_path):
    assert run("make-toy-fixture", "--out", str(tmp_path / "toy")) == 0
    src = tmp_path / "toy" / "toy.csv"
    before = src.read_bytes()
    assert run("ingest", "--input", str(src), "--out", str(tmp_path / "data")) == 0
    assert src.read_bytes() == before


@pytest.mark.parametrize("argv,needle", [
    (["train-gan", "--data", "{t}/nothing", "--out", "{t}/g"], "kinesynth ingest"),
    (["generate", "--model", "{t}/nothing", "--class", "T16/Mild", "--n", "2", "--out", "{t}/s"], "kinesynth train-gan"),
    (["report", "--eval", "{t}/nothing", "--out", "{t}/r"], "kinesynth evaluate"),
    (["ingest", "--input", "{t}/none.csv", "--out", "{t}/d"], "make-toy-fixture"),
])
def test_missing_upstream_names_command(tmp_path, capsys, argv, needle):
    argv = [a.format(t=tmp_path) for a in argv]
    assert main(argv) == 1
    assert needle in capsys.readouterr().err


def test_validation_errors_exit_1(tmp_path, capsys):
    assert main(["show-config", "--set", "gan.epochs=-1"]) == 1
    assert main(["show-config", "--set", "gan.bogus=1"]) == 1
    assert run("make-toy-fixture", "--out", str(tmp_path / "toy")) == 0
    assert run("ingest", "--input", str(tmp_path / "toy" / "toy.csv"), "--out", str(tmp_path / "d"),
               "--expect", "596") == 1
    assert "expected 596" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,header\n1,2,3\n")
    assert main(["ingest", "--input", str(bad), "--out", str(tmp_path / "d2")]) == 1


def test_bad_class_exit_1(runs, tmp_path, capsys):
    assert main(["generate", "--model", str(runs[0] / "gan"), "--class", "T99/Mild", "--n", "2",
                 "--out", str(tmp_path / "s")]) == 1
    assert "T16/ModerateSevere" in capsys.readouterr().err


def test_runtime_failure_exit_2(runs, tmp_path, monkeypatch, capsys):
    from kinesynth import cgan

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(cgan, "train", boom)
    assert run("train-gan", "--data", str(runs[0] / "data"), "--out", str(tmp_path / "g")) == 2
    assert "simulated failure" in capsys.readouterr().err


def test_env_seed_reaches_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("KINESYNTH_SEED", "4")
    assert run("make-toy-fixture", "--out", str(tmp_path / "toy")) == 0
    assert "seed = 4" in (tmp_path / "toy" / "config.resolved.ini").read_text()


def test_show_config_prints_ini(capsys):
    assert main(["show-config", "--set", "run.seed=2"]) == 0
    out = capsys.readouterr().out
    assert "[run]\nseed = 2" in out and "[gan]" in out
