from __future__ import annotations

import json
import threading
from pathlib import Path

import pytest
import requests

from dorclass import cli
from dorclass.pipeline import (STAGES, ArtifactCorrupted, MissingArtifact, PipelineConfig, WorkspaceLocked,
                               atomic_path, load_artifact, predict_texts, run_pipeline, run_stage, workspace_lock)
from dorclass.models import ConfigError
from dorclass.serve import BELOW_FLOOR, make_server

from conftest import FIXTURES

FIXTURE_XML = FIXTURES / "datacite_1000.xml"
SMALL_MODELS = {"mlp": {"hidden": [16], "epochs": 2, "batch_size": 64}, "rf": {"n_trees": 3}}
LONG_TEXT = " ".join(["signal"] * 12)


def fixture_config(workspace: Path) -> PipelineConfig:
    return PipelineConfig(workspace=str(workspace), raw=str(FIXTURE_XML), seed=7, models=SMALL_MODELS)


@pytest.fixture(scope="module")
def workspace_pair(tmp_path_factory):
    runs = []
    for name in ("a", "b"):
        cfg = fixture_config(tmp_path_factory.mktemp(name))
        runs.append((cfg, run_pipeline(cfg)))
    return runs


# --- configuration -----------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(size_class="xl")
    with pytest.raises(ConfigError):
        PipelineConfig(models={"svm": {}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_json({"workspace": "w", "colour": "red"})
    assert PipelineConfig(seed=4).stage_seed("train") == 1004


def test_config_paths_relative_to_file(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"workspace": "ws", "raw": "raw.xml"}))
    cfg = PipelineConfig.load(tmp_path / "run.json")
    assert cfg.workspace == str(tmp_path / "ws") and cfg.raw == str(tmp_path / "raw.xml")


def test_train_config_from_pipeline():
    cfg = PipelineConfig(seed=2, models={"rf": {"n_trees": 9}}, threshold=0.4)
    tc = cfg.train_config("rf")
    assert (tc.family, tc.n_trees, tc.seed, tc.threshold) == ("rf", 9, 1002, 0.4)


# --- workspace mechanics -----------------------------------------------------

def test_stage_without_input_is_missing_artifact(tmp_path):
    cfg = PipelineConfig(workspace=str(tmp_path / "ws"))
    with pytest.raises(MissingArtifact):
        run_stage("clean", cfg)
    assert not (tmp_path / "ws" / ".lock").exists()


def test_cli_missing_input_exit_code(tmp_path, capsys):
    code = cli.main(["clean", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "out.jsonl")])
    assert code == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "out.jsonl").exists()


def test_lock_blocks_second_stage(tmp_path):
    cfg = fixture_config(tmp_path)
    with workspace_lock(tmp_path):
        with pytest.raises(WorkspaceLocked):
            run_stage("clean", cfg)
    assert not (tmp_path / ".lock").exists()


def test_atomic_path_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.txt"
    with pytest.raises(RuntimeError):
        with atomic_path(target) as tmp:
            tmp.write_text("half")
            raise RuntimeError("crash")
    assert list(tmp_path.iterdir()) == []


def test_unknown_stage(tmp_path):
    with pytest.raises(ConfigError):
        run_stage("deploy", PipelineConfig(workspace=str(tmp_path)))


# --- end to end on the fixture -----------------------------------------------

def test_fixture_pipeline_outputs(workspace_pair):
    cfg, summary = workspace_pair[0]
    assert list(summary) == [s for s in STAGES if s != "harvest"]
    assert summary["clean"]["output"] == 515
    assert summary["split"]["train"] + summary["split"]["holdout"] == 515
    ws = Path(cfg.workspace)
    for rel in ("cleaned.jsonl", "reports/stats.csv", "reports/aggregate.csv", "reports/per_label.csv",
                "reports/correlations.csv", "reports/report.md", "models/mlp-s/model.bin", "models/rf-s/model.bin"):
        assert (ws / rel).is_file(), rel
    manifest = json.loads((ws / "manifest.json").read_text())
    assert manifest["artifacts"]["cleaned.jsonl"]["stage"] == "clean"
    assert all(v["seed"] == 7 for v in manifest["artifacts"].values())


def test_fixture_pipeline_is_deterministic(workspace_pair):
    (cfg_a, sum_a), (cfg_b, sum_b) = workspace_pair
    assert sum_a == sum_b
    hashes = [json.loads(Path(c.workspace, "manifest.json").read_text())["artifacts"] for c, _ in workspace_pair]
    # per-model manifests carry a creation time; everything else must match byte for byte
    strip = [{k: v["sha256"] for k, v in h.items() if not k.endswith("/manifest.json")} for h in hashes]
    assert strip[0] == strip[1]
    assert len(strip[0]) > 10


def test_artifact_hash_check(workspace_pair, tmp_path):
    import shutil

    src = Path(workspace_pair[0][0].workspace, "models", "rf-s")
    bad = tmp_path / "rf-s"
    shutil.copytree(src, bad)
    assert load_artifact(bad).config.family == "rf"
    with open(bad / "selection.json", "a", encoding="utf-8") as fh:
        fh.write(" ")
    with pytest.raises(ArtifactCorrupted):
        load_artifact(bad)


def test_cli_run_and_stats(tmp_path, capsys):
    cfg = {"workspace": "ws", "raw": str(FIXTURE_XML), "models": {"dct": {"max_depth": 3}}}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(tmp_path / "run.json"), "clean", "stats"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["clean"]["input"] == 1000
    assert cli.main(["stats", "--in", str(tmp_path / "ws" / "cleaned.jsonl")]) == 0
    assert capsys.readouterr().out.startswith("class,1 label")


# --- predict and serve -------------------------------------------------------

def test_predict_texts(toy_artifact):
    rows = predict_texts(toy_artifact, [LONG_TEXT, "x"])
    assert len(rows) == 2 and len(rows[0]["probabilities"]) == 20
    assert all(0.0 <= p <= 1.0 for p in rows[0]["probabilities"])


def test_predict_cli(toy_artifact, capsys):
    assert cli.main(["predict", "--model", str(toy_artifact), "--text", LONG_TEXT]) == 0
    row = json.loads(capsys.readouterr().out.strip())
    assert set(row) >= {"text", "probabilities", "labels"}


@pytest.fixture
def server(toy_artifact):
    srv, classifier = make_server(toy_artifact, port=0, background_load=False)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}", classifier
    srv.shutdown()
    srv.server_close()


def test_serve_classify(server):
    url, _ = server
    assert requests.get(url + "/health", timeout=5).status_code == 200
    first = requests.post(url + "/classify", json={"text": LONG_TEXT}, timeout=5)
    second = requests.post(url + "/classify", json={"text": LONG_TEXT}, timeout=5)
    assert first.status_code == 200
    assert first.json() == second.json()
    assert first.json()["warnings"] == []
    short = requests.post(url + "/classify", json={"text": "three word text"}, timeout=5).json()
    assert short["warnings"] == [BELOW_FLOOR]


@pytest.mark.parametrize("body", [b"", b"{}", b'{"text": "   "}', b"not json", b'["text"]'])
def test_serve_rejects_bad_bodies(server, body):
    url, _ = server
    assert requests.post(url + "/classify", data=body, timeout=5).status_code == 400


def test_serve_unavailable_until_loaded(tmp_path):
    srv, classifier = make_server(tmp_path / "missing", port=0, background_load=False)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{srv.server_address[1]}"
        assert requests.get(url + "/health", timeout=5).status_code == 503
        assert requests.post(url + "/classify", json={"text": LONG_TEXT}, timeout=5).status_code == 503
    finally:
        srv.shutdown()
        srv.server_close()
