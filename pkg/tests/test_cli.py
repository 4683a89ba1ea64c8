import csv
import json
import subprocess
import sys

import pytest

from domdiv.cli import main

SYNTH = {"synthetic": {"overlap": 1.0, "rng_seed": 4, "per_class_train": 40, "per_class_test": 20},
         "seed": 4}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps(SYNTH))
    assert main(["synth", "--config", str(d / "cfg.json"), "--out", str(d / "data")]) == 0
    rc = main(["train", "--features", str(d / "data" / "features.csv"),
               "--split", str(d / "data" / "split.json"),
               "--prototypes", str(d / "data" / "prototypes.csv"),
               "--out", str(d / "model.bin"), "--seed", "4", "--alpha", "0.05"])
    assert rc == 0
    return d


def _data(d, name):
    return str(d / "data" / name)


def test_synth_writes_inputs(workspace):
    for name in ("features.csv", "split.json", "prototypes.csv"):
        assert (workspace / "data" / name).stat().st_size > 0


def test_divide_writes_decisions(workspace):
    out = workspace / "dec.csv"
    rc = main(["divide", "--model", str(workspace / "model.bin"),
               "--features", _data(workspace, "features.csv"),
               "--split", _data(workspace, "split.json"),
               "--out", str(out), "--dump-boundaries", str(workspace / "b.csv")])
    assert rc == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["instance_id", "domain", "candidate_class", "candidate_score"]
    split = json.loads((workspace / "data" / "split.json").read_text())
    assert len(rows) - 1 == len(split["test_ids"])
    assert {r[1] for r in rows[1:]} <= {"known", "unknown", "uncertain"}
    assert (workspace / "b.csv").read_text().startswith("class_id,step,delta")


@pytest.mark.parametrize("task, key", [("gzsl", "H"), ("osl", "F1")])
def test_eval_reports(workspace, task, key, capsys):
    out = workspace / f"{task}.json"
    rc = main(["eval", "--task", task, "--model", str(workspace / "model.bin"),
               "--features", _data(workspace, "features.csv"),
               "--split", _data(workspace, "split.json"), "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert 0 <= doc["metrics"][key] <= 1
    assert f"{task} {key}" in capsys.readouterr().out


def test_eval_ablation_flags(workspace):
    out = workspace / "plain.json"
    rc = main(["eval", "--task", "gzsl", "--model", str(workspace / "model.bin"),
               "--features", _data(workspace, "features.csv"),
               "--split", _data(workspace, "split.json"), "--out", str(out),
               "--no-bootstrap", "--no-ks", "--fixed-delta", "0.2"])
    assert rc == 0
    assert json.loads(out.read_text())["domain_counts"]["uncertain"] == 0


def test_run_and_ablate(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps(SYNTH))
    assert main(["run", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "report.json").exists()
    assert main(["ablate", "--config", str(tmp_path / "cfg.json"),
                 "--out", str(tmp_path / "t.csv")]) == 0
    rows = list(csv.reader((tmp_path / "t.csv").open()))
    assert [r[0] for r in rows] == ["K-S test", "Bootstrap", "OSL", "G-ZSL"]


def test_config_error_exit_code(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"bogus": 1}))
    assert main(["run", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)]) == 2


def test_data_error_exit_code(tmp_path):
    rc = main(["divide", "--model", str(tmp_path / "missing.bin"),
               "--features", str(tmp_path / "f.csv"), "--out", str(tmp_path / "d.csv")])
    assert rc == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "domdiv", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
