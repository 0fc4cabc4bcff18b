from __future__ import annotations

import json
import random

import pytest

from taskworld.errors import EmptyBatch, IoError
from taskworld.metrics import (
    COMPLETE, DASH, Counts, EpisodeResult, MetricTable, SubtaskResult, fmt, load, load_summary, persist,
    render_table, summarize, summary_path,
)


def episode(ok: bool, iters: int = 0, category: str = "cat", sid: str = "s") -> EpisodeResult:
    return EpisodeResult(sid, "task", (SubtaskResult("a", ok, iters),), category)


def random_episode(rng: random.Random, i: int) -> EpisodeResult:
    subs = []
    for k in range(rng.randint(1, 4)):
        attempted = not subs or subs[-1].succeeded
        ok = attempted and rng.random() < 0.7
        subs.append(SubtaskResult(f"st{k}", ok, rng.randint(0, 5) if attempted else 0, attempted))
    err = "boom" if rng.random() < 0.05 else None
    return EpisodeResult(f"e{i}", "task", tuple(subs), rng.choice(["pick", "place", "open"]), err)


def test_sr_matches_headline():
    results = [episode(i < 73, sid=f"e{i}") for i in range(102)]
    table = summarize(results)
    assert table.overall.attempts == 102 and table.overall.successes == 73
    assert fmt(table.sr) == "71.6"


def test_esr_arithmetic():
    # 10 failed at iteration 0, 4 of which were rescued later
    results = [episode(True, 2) for _ in range(4)] + [episode(False, 5) for _ in range(6)]
    results += [episode(True, 0) for _ in range(5)]
    table = summarize(results)
    assert table.overall.initial_failures == 10
    assert fmt(table.esr) == "40.0"
    assert fmt(table.iter) == f"{8 / 9:.1f}"


def test_esr_dash_without_initial_failures():
    table = summarize([episode(True, 0), episode(True, 0)])
    assert table.esr is None and fmt(table.esr) == DASH
    assert table.iter == 0.0


def test_iter_averages_successes_only():
    table = summarize([episode(True, 1), episode(True, 3), episode(False, 5)])
    assert table.iter == 2.0


def test_empty_batch():
    with pytest.raises(EmptyBatch):
        summarize([])


def test_result_invariants():
    with pytest.raises(ValueError):
        EpisodeResult("e", "t", (SubtaskResult("x", True, 0, attempted=False),))
    r = EpisodeResult("e", "t", (SubtaskResult("a", True, 1), SubtaskResult("b", False, 0, attempted=False)))
    assert not r.complete_success
    assert r.subtasks[0].rescued and not r.subtasks[1].rescued
    assert EpisodeResult("e", "t", (SubtaskResult("a", True, 0),), error="x").complete_success is False


def test_unattempted_subtasks_are_not_counted():
    r = EpisodeResult("e", "t", (SubtaskResult("a", False, 5), SubtaskResult("b", False, 0, attempted=False)), "c")
    table = summarize([r])
    assert table.cell("c", "subtask_1").attempts == 1
    assert table.cell("c", "subtask_2").attempts == 0
    assert table.columns("c") == ["subtask_1", COMPLETE]


def test_sr_monotone_under_added_success():
    rng = random.Random(3)
    results = [random_episode(rng, i) for i in range(50)]
    before = summarize(results).sr
    assert summarize(results + [episode(True, 0, "pick")]).sr >= before


def test_initial_successes_stay_out_of_esr_denominator():
    base = [episode(False, 5), episode(True, 2)]
    a = summarize(base).overall
    b = summarize(base + [episode(True, 0)] * 7).overall
    assert a.initial_failures == b.initial_failures == 2


def test_merge_is_associative_over_random_partitions():
    rng = random.Random(11)
    results = [random_episode(rng, i) for i in range(60)]
    whole = summarize(results)
    for _ in range(100):
        cuts = sorted(rng.sample(range(1, len(results)), rng.randint(1, 5)))
        parts = [results[a:b] for a, b in zip([0] + cuts, cuts + [len(results)])]
        tables = [summarize(p) for p in parts]
        left = tables[0]
        for t in tables[1:]:
            left = left.merge(t)
        right = tables[-1]
        for t in reversed(tables[:-1]):
            right = t.merge(right)
        assert left == right == whole


def test_counts_addition():
    assert Counts(1, 1, 0, 0, 2) + Counts(2, 1, 1, 1, 3) == Counts(3, 2, 1, 1, 5)
    assert Counts().sr is None and Counts().iter is None


def test_subtask_average_is_unweighted():
    r1 = EpisodeResult("a", "t", (SubtaskResult("x", True, 0), SubtaskResult("y", False, 0)), "c")
    r2 = EpisodeResult("b", "t", (SubtaskResult("x", False, 0),), "c")
    table = summarize([r1, r2])
    # subtask_1 SR 50, subtask_2 SR 0
    assert table.subtask_avg("c") == 25.0


def test_table_json_round_trip():
    rng = random.Random(5)
    table = summarize([random_episode(rng, i) for i in range(30)])
    assert MetricTable.from_json(json.loads(json.dumps(table.to_json()))) == table


def test_render_table_layout():
    results = [episode(True, 0, "pick"), episode(False, 3, "pick"), episode(True, 2, "open")]
    text = render_table(summarize(results))
    lines = text.splitlines()
    assert "Subtask 1" in lines[0] and "Complete Task" in lines[0] and "Subtask Avg" in lines[0]
    assert lines[1].split()[:3] == ["SR", "ESR", "Iter"]
    assert any(line.startswith("pick") for line in lines)
    assert lines[-1].startswith("Overall")
    assert "66.7" in lines[-1]


def test_persist_round_trip(tmp_path):
    rng = random.Random(9)
    results = [random_episode(rng, i) for i in range(20)]
    path = tmp_path / "results.jsonl"
    table = persist(results, path)
    assert load(path) == results
    assert load_summary(path) == table == summarize(results)
    first = path.read_text()
    persist(results, path)
    assert path.read_text() == first
    assert list(json.loads(first.splitlines()[0])) == sorted(json.loads(first.splitlines()[0]))
    assert summary_path(path).name == "results.jsonl.summary.json"


def test_append_equals_single_batch(tmp_path):
    rng = random.Random(13)
    a = [random_episode(rng, i) for i in range(10)]
    b = [random_episode(rng, i) for i in range(10, 25)]
    path = tmp_path / "r.jsonl"
    persist(a, path)
    merged = persist(b, path, append=True)
    assert merged == summarize(a + b) == summarize(a).merge(summarize(b))
    assert load(path) == a + b


def test_io_errors(tmp_path):
    with pytest.raises(IoError):
        persist([episode(True)], tmp_path / "missing" / "r.jsonl")
    with pytest.raises(IoError):
        load(tmp_path / "nope.jsonl")
    with pytest.raises(IoError):
        load_summary(tmp_path / "nope.jsonl")
