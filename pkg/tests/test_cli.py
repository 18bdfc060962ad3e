import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pbp.ablation import ABLATION_HEADER, evaluate_scenes
from pbp.cli import main
from pbp.lane_graph import load_scene
from pbp.metrics import evaluate
from pbp.model import load_params
from pbp.predictor import PredictionSet


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenes = root / "scenes"
    assert main(["generate", "--layout", "mixed", "--n-scenes", "12", "--path-free-fraction", "0.25",
                 "--seed", "3", "--out", str(scenes)]) == 0
    model = root / "model.json"
    assert main(["train", "--scenes", str(scenes), "--out", str(model), "--epochs", "2", "--seed", "7"]) == 0
    return root, scenes, model


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_files(work, tmp_path):
    _, scenes, _ = work
    names = sorted(os.listdir(scenes))
    assert names[0] == "scene_0000.json" and names[-1] == "scene_0011.json"
    again = tmp_path / "again"
    main(["generate", "--layout", "mixed", "--n-scenes", "12", "--path-free-fraction", "0.25",
          "--seed", "3", "--out", str(again)])
    for n in names:
        assert (scenes / n).read_bytes() == (again / n).read_bytes()


def test_train_outputs(work):
    root, _, model = work
    lines = (root / "model.csv").read_text().splitlines()
    assert lines[0] == "epoch,cls,reg_s,reg_d,selector,path_free,total"
    assert len(lines) == 3
    assert load_params(model).variant == "pbp"


def test_predict_file_has_k_modes(work, tmp_path, capsys):
    _, scenes, model = work
    out = tmp_path / "pred.json"
    code, _, _ = run(["predict", "--model", model, "--scene", scenes / "scene_0000.json", "--out", out], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["agent_id"] == 0
    assert len(doc["modes"]) == 6
    assert abs(sum(m["probability"] for m in doc["modes"]) - 1) <= 1e-6
    assert all(len(m["waypoints"]) == 30 for m in doc["modes"])


def test_predict_to_stdout(work, capsys):
    _, scenes, model = work
    code, out, _ = run(["predict", "--model", model, "--scene", scenes / "scene_0001.json"], capsys)
    assert code == 0 and len(json.loads(out)["modes"]) == 6


def test_predict_roundtrip_metrics(work, tmp_path, capsys):
    _, scenes, model = work
    params = load_params(model)
    files = sorted(scenes.iterdir())
    loaded = [load_scene(f) for f in files]
    records = []
    for i, f in enumerate(files):
        out = tmp_path / f"p{i}.json"
        run(["predict", "--model", model, "--scene", f, "--out", out], capsys)
        pred = PredictionSet.from_dict(json.loads(out.read_text()))
        records.append((pred, loaded[i].focal_agent.future, loaded[i].map))
    direct, _ = evaluate_scenes(params, loaded)
    assert evaluate(records).to_dict() == direct.to_dict()


def test_eval_outputs(work, tmp_path, capsys):
    _, scenes, model = work
    report = tmp_path / "report.json"
    svg = tmp_path / "curve.svg"
    code, out, _ = run(["eval", "--model", model, "--scenes", scenes, "--out", report, "--svg", svg], capsys)
    assert code == 0 and "minFDE_6=" in out
    doc = json.loads(report.read_text())
    assert set(doc) >= {"min_ade", "min_fde", "miss_rate", "offroad_rate", "offroad_by_horizon", "lane_deviation", "dac"}
    assert set(doc["min_fde"]) == {"1", "6"}
    csv = (tmp_path / "report_offroad.csv").read_text().splitlines()
    assert csv[0] == "horizon_step,offroad_rate" and len(csv) == 31
    first = svg.read_bytes()
    assert first.startswith(b"<?xml")
    run(["eval", "--model", model, "--scenes", scenes, "--out", report, "--svg", svg], capsys)
    assert svg.read_bytes() == first


def test_eval_parallel_matches_serial(work, tmp_path, capsys):
    _, scenes, model = work
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["eval", "--model", model, "--scenes", scenes, "--out", a], capsys)
    run(["eval", "--model", model, "--scenes", scenes, "--out", b, "--workers", "2"], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_ablate_single_decoder(work, tmp_path, capsys):
    _, scenes, _ = work
    out = tmp_path / "abl.csv"
    code, stdout, _ = run(["ablate", "--scenes", scenes, "--decoders", "pbp", "--epochs", "1", "--out", out], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ABLATION_HEADER and len(lines) == 2 and lines[1].startswith("pbp,")
    assert stdout == out.read_text()
    assert (tmp_path / "abl_pbp_offroad.csv").exists()


def test_ablate_all_decoders(work, tmp_path, capsys):
    _, scenes, _ = work
    out = tmp_path / "abl.csv"
    svg = tmp_path / "abl.svg"
    code, _, _ = run(["ablate", "--scenes", scenes, "--epochs", "1", "--out", out, "--svg", svg], capsys)
    assert code == 0
    rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
    assert [r[0] for r in rows] == ["pbp", "pbp_cartesian", "goal_based", "multimodal_regression"]
    assert all(len(r) == 7 for r in rows)
    assert svg.exists()


def test_config_file_sections(work, tmp_path, capsys):
    _, scenes, _ = work
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"epochs": 1, "learning_rate": 1e-3}, "sampler": {"max_paths": 50}}))
    out = tmp_path / "m.json"
    code, stdout, _ = run(["train", "--scenes", scenes, "--config", cfg, "--out", out], capsys)
    assert code == 0 and len(stdout.splitlines()) == 2


def test_unknown_config_key(work, tmp_path, capsys):
    _, scenes, _ = work
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochz": 3}))
    code, _, err = run(["train", "--scenes", scenes, "--config", cfg], capsys)
    assert code == 1 and err.startswith("E_CONFIG:")


def test_corrupt_model(work, tmp_path, capsys):
    _, scenes, _ = work
    bad = tmp_path / "bad.json"
    bad.write_text('{"format_version": 1, "heads": [')
    code, _, err = run(["predict", "--model", bad, "--scene", scenes / "scene_0000.json"], capsys)
    assert code == 1 and err.startswith("E_PARSE:")


def test_version_mismatch(work, tmp_path, capsys):
    _, scenes, model = work
    doc = json.loads(model.read_text())
    doc["format_version"] = 2
    bad = tmp_path / "v2.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(["predict", "--model", bad, "--scene", scenes / "scene_0000.json"], capsys)
    assert code == 1 and err.startswith("E_CHECKPOINT_VERSION:")


def test_unknown_decoder(work, capsys):
    _, scenes, _ = work
    code, _, err = run(["ablate", "--scenes", scenes, "--decoders", "pbp,anchor"], capsys)
    assert code == 1 and err.startswith("E_CONFIG:")


def test_missing_file(work, tmp_path, capsys):
    _, _, model = work
    code, _, err = run(["predict", "--model", model, "--scene", tmp_path / "nope.json"], capsys)
    assert code == 1 and err.startswith("E_IO:")


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2
    assert "E_USAGE:" in capsys.readouterr().err


def test_console_script_exit_code(work, tmp_path):
    _, scenes, _ = work
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    proc = subprocess.run([sys.executable, "-m", "pbp.cli", "predict", "--model", str(bad),
                           "--scene", str(scenes / "scene_0000.json")], capture_output=True, text=True)
    assert proc.returncode != 0
    assert proc.stderr.startswith("E_PARSE:")
    ok = subprocess.run([sys.executable, "-m", "pbp.cli", "--help"], capture_output=True, text=True)
    assert ok.returncode == 0 and "ablate" in ok.stdout


def test_trained_model_predictions_finite(work):
    _, scenes, model = work
    params = load_params(model)
    _, preds = evaluate_scenes(params, [load_scene(f) for f in sorted(scenes.iterdir())])
    assert all(np.all(np.isfinite(p.trajectories)) for p in preds)
