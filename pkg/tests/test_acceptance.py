"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line with its runtime.

Run with ``pytest tests/test_acceptance.py`` or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import bundle_for, scene_for  # noqa: E402
from fixture_tables import BDDL_ROWS, FAMILIES, INITIAL_FLOWS, WIRE_FIXTURES  # noqa: E402
from randomized import corrupt_boundary, entry_states, random_case, random_transfer  # noqa: E402
from taskworld.bddl import emit_bddl, parse_bddl  # noqa: E402
from taskworld.bench import apply_faults, load_manifest, run_bench  # noqa: E402
from taskworld.codec import canonical_json, decode_flow, encode_flow  # noqa: E402
from taskworld.evolve import EvolutionConfig, Outcome, evolve_complex, evolve_subtask  # noqa: E402
from taskworld.graph import check_reachability  # noqa: E402
from taskworld.metrics import DASH, EpisodeResult, SubtaskResult, fmt, render_table, summarize  # noqa: E402
from taskworld.observe import downsample_indices  # noqa: E402
from taskworld.predicates import GRIPPER, INGRIPPER, ROBOT, format_predicate  # noqa: E402
from taskworld.primitives import PrimitiveKind, format_flow  # noqa: E402
from taskworld.scene import ObjectClass, ObjectSpec, adjust_object_scale  # noqa: E402
from taskworld.taskgen import TemplatePlanner, generate  # noqa: E402
from taskworld.world import (  # noqa: E402
    EventKind, TaskContext, apply_transfer, execute_flow, initial_state, snapshot_predicates,
)


# ---------------------------------------------------------------- criteria

def criterion_1():
    for wire in WIRE_FIXTURES:
        flow = decode_flow(json.loads(wire))
        assert canonical_json(encode_flow(flow)) == canonical_json(json.loads(wire))
        assert canonical_json(encode_flow(flow)) == wire.replace(" ", "")


def criterion_2():
    rows = 0
    for fam, (scene, keyword) in FAMILIES.items():
        bundle = generate(keyword, scene_for(scene), TemplatePlanner())
        for flow, expected in zip(bundle.flows, INITIAL_FLOWS[fam], strict=True):
            assert format_flow(flow) == expected
            rows += 1
    assert rows == 12


def criterion_3():
    rows = 0
    for fam, (scene, keyword) in FAMILIES.items():
        bundle = generate(keyword, scene_for(scene))
        for st, (init, goal) in zip(bundle.task.subtasks, BDDL_ROWS[fam], strict=True):
            assert " ".join(format_predicate(p) for p in st.init) == init
            assert " ".join(format_predicate(p) for p in st.goal) == goal
            assert parse_bddl(emit_bddl(st)) == (st.init, st.goal)
            rows += 1
    assert rows == 12


def criterion_4():
    for fam, (scene, _) in FAMILIES.items():
        for spec in scene_for(scene).objects:
            if spec.object_class is ObjectClass.FixtureA:
                assert adjust_object_scale(spec) == 1.0
    rng = random.Random(4)
    for _ in range(1000):
        d_min = rng.uniform(0.06, 0.5)
        if d_min <= 0.06:
            continue
        spec = ObjectSpec("x_0", "apple", ObjectClass.ManipulableB, (d_min, d_min + rng.uniform(0, 0.3), 0.1),
                          (1.0, 1.0, 0.5))
        s = adjust_object_scale(spec)
        assert 0.044 <= s * d_min <= 0.056
        # direct formula: the ideal factor rounded to two decimals
        assert abs(s - 0.05 / d_min) <= 0.005 + 1e-9
    glass = ObjectSpec("glass_0", "glass", ObjectClass.ManipulableB, (0.135, 0.135, 0.3), (1.0, 1.0, 0.5))
    assert adjust_object_scale(glass) == 0.37


def _touched(pred) -> set:
    ids = set(pred.args)
    if pred.name == INGRIPPER:
        ids.add(GRIPPER)
    return ids


def criterion_5():
    rng = random.Random(5)
    checked = attempts = 0
    # keep sampling until 500 collision-free traces have been checked
    while checked < 500 and attempts < 3000:
        attempts += 1
        state, task, flow = random_case(rng)
        trace = execute_flow(state, flow, task)
        if any(e.kind in (EventKind.Collision, EventKind.DoorDisturbed) for s in trace.steps for e in s.events):
            continue
        allowed = set(task.context_ids) | {GRIPPER, ROBOT}
        # independent of the trace's own bookkeeping: diff every consecutive pair of snapshots
        prev = snapshot_predicates(trace.initial_state)
        for step in trace.steps:
            cur = snapshot_predicates(step.post_state)
            for pred in prev.keys() | cur.keys():
                if prev.get(pred) != cur.get(pred):
                    assert _touched(pred) <= allowed, (format_flow(flow), task.name, pred)
            prev = cur
        checked += 1
    assert checked >= 500, checked


def criterion_6():
    rng = random.Random(6)
    states = [s for s, _ in entry_states()]
    for _ in range(1000):
        state = rng.choice(states)
        edge, ctx = random_transfer(rng, state)
        after = apply_transfer(state, edge, ctx)
        assert after.tick == state.tick + 1
        assert snapshot_predicates(after) == snapshot_predicates(state)


CORRUPTED = (("T1", 2), ("T2", 3), ("T3", 1), ("T4", 1))


def criterion_7():
    cases = 0
    for fam, (scene, _) in FAMILIES.items():
        b = bundle_for(fam)
        report = check_reachability(scene_for(scene), b.task, b.flows, scales=b.scales)
        assert report.feasible and report.failing_index is None, fam
        cases += 1
    for fam, k in CORRUPTED:
        b = bundle_for(fam)
        report = check_reachability(scene_for(FAMILIES[fam][0]), corrupt_boundary(b, k), b.flows, scales=b.scales)
        assert not report.feasible
        assert (report.failing_index, report.failing_stage) == (k, "transfer"), (fam, k)
        cases += 1
    assert cases == 8


def _entry(fam: str, k: int, faults: dict):
    b = bundle_for(fam)
    scene = apply_faults(scene_for(FAMILIES[fam][0]), faults)
    state = initial_state(scene, scales=b.scales)
    for j in range(k):
        state = execute_flow(state, b.flows[j], b.task.subtasks[j]).final_state
        state = apply_transfer(state, b.task.transfers[j], TaskContext.of(b.task.subtasks[j + 1]))
    return state, b


def criterion_8():
    door = {"door_swept_volume_blocks_path": True}
    # (a) door collision is repaired with a side-step
    state, b = _entry("T1", 2, door)
    h = evolve_subtask(state, b.task.subtasks[2], b.flows[2])
    assert h.outcome is Outcome.Succeeded and 1 <= h.iterations_used <= 5
    assert any(a.kind is PrimitiveKind.MOVE_BASE_LEFT for a in h.records[-1].flow)
    # (b) an initially successful subtask exits at iteration 0
    state, b = _entry("T3", 0, {})
    h = evolve_subtask(state, b.task.subtasks[0], b.flows[0])
    assert h.outcome is Outcome.Succeeded and h.iterations_used == 0 and len(h.records) == 1
    # (c) a welded target exhausts the budget
    state, b = _entry("T3", 0, {"weld_target": "apple_0"})
    h = evolve_subtask(state, b.task.subtasks[0], b.flows[0], EvolutionConfig(tau_max=5))
    assert h.outcome is Outcome.ExhaustedBudget and h.iterations_used == 5 and len(h.records) == 6
    # (d) reruns are byte-identical
    logs = []
    for _ in range(2):
        state, b = _entry("T1", 0, door)
        logs.append(evolve_complex(state, b.task, b.flows).to_jsonl().encode())
    assert logs[0] == logs[1]


def _exhaustive_indices(n: int, cap: int):
    if n <= cap:
        return list(range(n))
    out = []
    for i in range(cap):
        ideal = Fraction(i * (n - 1), cap - 1)
        out.append(min(range(n), key=lambda c: (abs(c - ideal), -c)))
    return out


def criterion_9():
    for n in range(1, 41):
        idx = downsample_indices(n, 6)
        assert len(idx) == min(n, 6)
        assert idx[0] == 0 and idx[-1] == n - 1
        assert all(a < b for a, b in zip(idx, idx[1:]))
        assert idx == _exhaustive_indices(n, 6), n


def _episode(i: int, ok: bool, iters: int = 0, cat: str = "c") -> EpisodeResult:
    return EpisodeResult(f"e{i}", "t", (SubtaskResult("s", ok, iters),), cat)


def criterion_10():
    table = summarize([_episode(i, i < 73) for i in range(102)])
    assert fmt(table.sr) == "71.6"
    assert fmt(summarize([_episode(0, True), _episode(1, True)]).esr) == DASH
    rng = random.Random(10)
    results = [_episode(i, rng.random() < 0.7, rng.randint(0, 5), rng.choice("abc")) for i in range(80)]
    whole = summarize(results)
    for _ in range(100):
        cuts = sorted(rng.sample(range(1, len(results)), rng.randint(1, 6)))
        parts = [summarize(results[a:b]) for a, b in zip([0] + cuts, cuts + [len(results)])]
        merged = parts[0]
        for p in parts[1:]:
            merged = merged.merge(p)
        assert merged == whole


BENCH_TEXT = {}


def criterion_11():
    scenarios = load_manifest()
    assert len(scenarios) == 12
    t0 = time.perf_counter()
    serial, table = run_bench(scenarios, jobs=1)
    single = time.perf_counter() - t0
    t0 = time.perf_counter()
    parallel, table4 = run_bench(scenarios, jobs=4)
    four = time.perf_counter() - t0
    assert serial == parallel and table == table4
    assert table.sr >= 75.0, table.sr
    text = render_table(table)
    for head in ("Subtask 1", "Complete Task", "Subtask Avg", "SR", "ESR", "Iter", "Overall"):
        assert head in text
    assert single < 120 and four < 40
    BENCH_TEXT["table"] = text


BUDGETS = {1: 1, 2: 1, 3: 1, 4: 1, 5: 30, 6: 5, 7: 10, 8: 20, 9: 1, 10: 5, 11: 160}
CHECKS = {n: globals()[f"criterion_{n}"] for n in BUDGETS}


def run_criterion(n: int):
    """Run criterion ``n`` and return ``(passed, seconds, detail)``."""
    t0 = time.perf_counter()
    try:
        CHECKS[n]()
        passed, detail = True, ""
    except Exception as exc:  # report every failure as a FAIL line
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0
    if passed and elapsed > BUDGETS[n]:
        passed, detail = False, f"over budget ({BUDGETS[n]} s)"
    return passed, elapsed, detail


def _line(n: int, passed: bool, elapsed: float, detail: str) -> str:
    return f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {elapsed:6.2f}s  {detail}".rstrip()


@pytest.mark.parametrize("n", sorted(BUDGETS))
def test_criterion(n, capsys):
    passed, elapsed, detail = run_criterion(n)
    with capsys.disabled():
        print("\n" + _line(n, passed, elapsed, detail))
    assert passed, detail


def main() -> int:
    ok = True
    for n in sorted(BUDGETS):
        passed, elapsed, detail = run_criterion(n)
        print(_line(n, passed, elapsed, detail), flush=True)
        ok &= passed
    if "table" in BENCH_TEXT:
        print()
        print(BENCH_TEXT["table"], end="")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
