from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import scene_for
from taskworld.bench import KNOWN_FAULTS, Scenario, apply_faults, load_manifest, run_bench, run_episode
from taskworld.cli import main
from taskworld.errors import InvalidParam, IoError
from taskworld.metrics import load, load_summary
from taskworld.scene import bundled_scene_path


def test_bundled_manifest():
    scenarios = load_manifest()
    assert len(scenarios) == 12
    assert len({s.id for s in scenarios}) == 12
    assert {s.family for s in scenarios} == {"T1", "T2", "T3", "T4"}
    assert all(set(s.faults) <= set(KNOWN_FAULTS) for s in scenarios)


def test_manifest_errors(tmp_path):
    with pytest.raises(InvalidParam):
        Scenario.from_json({"id": "x", "scene": "t4_desk", "keyword": "k", "faults": {"gremlins": True}})
    with pytest.raises(InvalidParam):
        Scenario.from_json({"id": "", "scene": "t4_desk", "keyword": "k"})
    with pytest.raises(IoError):
        load_manifest(tmp_path / "none.json")


def test_manifest_scene_paths_resolve_relative(tmp_path):
    (tmp_path / "desk.json").write_text(bundled_scene_path("t4_desk").read_text())
    (tmp_path / "m.json").write_text(json.dumps([{"id": "a", "scene": "desk.json", "keyword": "Place a cup onto a table"}]))
    [s] = load_manifest(tmp_path / "m.json")
    assert s.scene == str((tmp_path / "desk.json").resolve())
    assert run_episode(s).result.complete_success


def test_apply_faults_is_pure_and_targeted():
    scene = scene_for("t1_kitchen")
    door = apply_faults(scene, {"door_swept_volume_blocks_path": True})
    fridge = door.get("refrigerator_0")
    assert fridge.articulation.swept_volume != scene.get("refrigerator_0").articulation.swept_volume
    assert scene.get("refrigerator_0") == scene_for("t1_kitchen").get("refrigerator_0")
    assert apply_faults(scene, {"stiff_door": 0.45}).get("refrigerator_0").articulation.open_threshold == 0.45
    assert apply_faults(scene, {}) == scene
    moved = apply_faults(scene, {"translate": [0.1, 0.0]})
    assert moved.get("glass_0").position[0] == pytest.approx(scene.get("glass_0").position[0] + 0.1)
    with pytest.raises(InvalidParam):
        apply_faults(scene, {"weld_target": "banana_0"})


def test_episode_errors_are_recorded_not_raised():
    r = run_episode(Scenario("bad", "t4_desk", "Eat a sandwich")).result
    assert not r.complete_success and r.error.startswith("NoTemplate")


def test_bench_parallel_matches_serial():
    scenarios = load_manifest()
    serial, t1 = run_bench(scenarios, jobs=1)
    parallel, t4 = run_bench(scenarios, jobs=4)
    assert serial == parallel and t1 == t4
    assert t1.sr >= 75.0
    failed = [r.scenario_id for r in serial if not r.complete_success]
    assert failed == ["t3_weld"]


# ---------------------------------------------------------------- CLI

def _dup_scene(tmp_path):
    doc = json.loads(bundled_scene_path("t4_desk").read_text())
    doc["objects"].append(dict(doc["objects"][2]))
    p = tmp_path / "dup.json"
    p.write_text(json.dumps(doc))
    return p


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", str(bundled_scene_path("t1_kitchen"))]) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is True
    assert main(["validate", str(_dup_scene(tmp_path))]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValidationError" and "glass_0" in err["message"]
    assert main(["validate", str(tmp_path / "missing.json")]) == 2


def test_generate_writes_bundle(tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["generate", "--scene", "t1_kitchen", "--keyword", "put glass into fridge", "--out", str(out)]) == 0
    bddl = sorted(p.name for p in (out / "bddl").iterdir())
    assert len(bddl) == 4 and bddl[0].startswith("01_")
    flows = json.loads((out / "flows.json").read_text())
    assert len(flows) == 4
    assert json.loads((out / "scales.json").read_text()) == {"glass_0": 0.37, "refrigerator_0": 1.0}
    assert json.loads((out / "task.json").read_text())["subtasks"][0]["target_id"] == "refrigerator_0"


def test_generate_failures(capsys, monkeypatch):
    assert main(["generate", "--scene", "t4_desk", "--keyword", "eat a sandwich"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "NoTemplate"
    assert main(["generate", "--scene", "t4_desk", "--keyword", "put banana on table"]) == 3
    monkeypatch.delenv("AGT_PLANNER_URL", raising=False)
    assert main(["generate", "--scene", "t4_desk", "--keyword", "place cup", "--planner", "remote"]) == 4
    monkeypatch.delenv("AGT_CRITIC_URL", raising=False)
    assert main(["evolve", "--scene", "t4_desk", "--keyword", "place a cup onto a table", "--critic", "remote"]) == 4


def test_run_soft_failure_exits_zero(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--scene", "t3_desk", "--keyword", "Pick up apple and put into bowl",
                 "--fault", "weld_target=\"apple_0\"", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "FAILED" in text
    assert json.loads((out / "reachability.json").read_text())["feasible"] is False
    rows = [json.loads(x) for x in (out / "trace.jsonl").read_text().splitlines()]
    assert rows


def test_evolve_door_scenario(tmp_path, capsys):
    argv = ["evolve", "--scene", "t1_kitchen", "--keyword", "put glass into fridge",
            "--fault", "door_swept_volume_blocks_path", "--out"]
    assert main(argv + [str(tmp_path / "a")]) == 0
    text = capsys.readouterr().out
    assert "MOVE_BASE_LEFT" in text and "overall: success" in text
    assert main(argv + [str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "evolution.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "evolution.jsonl").read_bytes()
    assert len(a.splitlines()) >= 5


def test_bench_command(tmp_path, capsys):
    assert main(["bench", "--jobs", "1", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "Complete Task" in text and "SR" in text and "ESR" in text and "Iter" in text
    assert len(load(tmp_path / "results.jsonl")) == 12
    assert load_summary(tmp_path / "results.jsonl").sr >= 75.0
    assert (tmp_path / "table.txt").read_text() in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "taskworld", "validate", str(bundled_scene_path("t4_desk"))],
                          capture_output=True, text=True)
    assert proc.returncode == 0
