from __future__ import annotations

import itertools
from fractions import Fraction

import pytest

from conftest import bundle_for, scene_for
from taskworld.errors import InvalidParam, StepOutOfRange
from taskworld.observe import (
    View, capture, downsample, downsample_indices, observation_digest, rasterize, window, window_to_json,
)
from taskworld.primitives import act
from taskworld.world import execute_flow, initial_state


def oracle_indices(n: int, cap: int):
    """Scan every index for each slot and keep the one nearest the ideal position (ties go up)."""
    if n <= cap:
        return list(range(n))
    out = []
    for i in range(cap):
        ideal = Fraction(i * (n - 1), cap - 1)
        out.append(min(range(n), key=lambda c: (abs(c - ideal), -c)))
    return out


def test_n14_example():
    assert downsample_indices(14, 6) == [0, 3, 5, 8, 10, 13]
    assert downsample(list("abcdefghijklmn"), 6) == list("adfikn")


@pytest.mark.parametrize("n", range(1, 41))
def test_downsample_against_oracle(n):
    idx = downsample_indices(n, 6)
    assert idx == oracle_indices(n, 6)
    assert len(idx) == min(n, 6)
    assert all(a < b for a, b in zip(idx, idx[1:]))
    if n:
        assert idx[0] == 0 and idx[-1] == n - 1


def test_downsample_is_minimax_for_small_n():
    # brute force over all index subsets: no other choice is more uniform
    for n in range(7, 16):
        ideal = [Fraction(i * (n - 1), 5) for i in range(6)]
        ours = max(abs(a - b) for a, b in zip(downsample_indices(n, 6), ideal))
        for mid in itertools.combinations(range(1, n - 1), 4):
            cand = (0,) + mid + (n - 1,)
            assert ours <= max(abs(a - b) for a, b in zip(cand, ideal))


def test_downsample_edge_cases():
    assert downsample_indices(0, 6) == []
    assert downsample_indices(6, 6) == list(range(6))
    assert downsample_indices(2, 6) == [0, 1]
    assert downsample_indices(9, 1) == [0]
    with pytest.raises(InvalidParam):
        downsample_indices(5, 0)


def _t1_trace():
    b = bundle_for("T1")
    state = initial_state(scene_for("t1_kitchen"), scales=b.scales)
    return execute_flow(state, b.flows[0], b.task.subtasks[0]), b


@pytest.mark.parametrize("duration, expected", [(6, 6), (14, 6), (4, 4), (2, 2)])
def test_capture_frame_counts(duration, expected):
    trace, _ = _t1_trace()
    step = trace.steps[0]
    fake = type(trace)(trace.initial_state, (type(step)(step.action, step.post_state, step.events, duration,
                                                         step.achieved, step.changed_pairs),),
                       trace.success, trace.changed_pairs, trace.task)
    obs = capture(fake, views=(View.Global, View.Head), p2=1)
    assert len(obs.frames(1, View.Global)) == expected
    assert len(obs.frames(1, View.Head)) == expected


def test_capture_respects_views_and_ticks():
    trace, _ = _t1_trace()
    obs = capture(trace, views=(View.Head, View.Wrist, View.Global))
    assert obs.views == (View.Head, View.Wrist, View.Global)
    assert len(obs) == len(trace.steps)
    prev = trace.initial_state.tick
    for j, st in enumerate(trace.steps, start=1):
        for v in obs.views:
            frames = obs.frames(j, v)
            assert 1 <= len(frames) <= 6
            assert all(prev < f.tick <= st.post_state.tick for f in frames)
            assert frames[-1].tick == st.post_state.tick
            assert all(f.view is v for f in frames)
        prev = st.post_state.tick
    assert "objects" in obs.frames(1, View.Global)[0].payload
    assert "objects" not in obs.frames(1, View.Head)[0].payload


def test_capture_p2_period():
    trace, _ = _t1_trace()
    obs = capture(trace, views=(View.Global,), p2=4)
    for j, st in enumerate(trace.steps, start=1):
        assert len(obs.frames(j, View.Global)) == -(-st.duration_ticks // 4)


def test_capture_is_deterministic_and_pure():
    trace, _ = _t1_trace()
    before = [s.post_state.snapshot_json() for s in trace.steps]
    a, b = capture(trace), capture(trace)
    assert observation_digest(a) == observation_digest(b)
    assert [s.post_state.snapshot_json() for s in trace.steps] == before


def test_last_frame_carries_step_events():
    b = bundle_for("T1")
    state = initial_state(scene_for("t1_kitchen"), scales=b.scales)
    trace = execute_flow(state, (act("GRASP"),), b.task.subtasks[1])
    frames = capture(trace).frames(1, View.Global)
    assert frames[-1].payload["events"][0]["kind"] == "GraspEmpty"
    assert all(not f.payload["events"] for f in frames[:-1])


def test_window_clamps():
    trace, _ = _t1_trace()
    obs = capture(trace, views=(View.Global,))
    one = window(obs, 1, 1)
    assert one[View.Global] == list(obs.frames(1, View.Global))
    four = window(obs, 4, 1)
    assert four[View.Global] == list(obs.frames(3, View.Global)) + list(obs.frames(4, View.Global))
    wide = window(obs, 4, 10)
    assert wide[View.Global] == [f for j in range(1, 5) for f in obs.frames(j, View.Global)]
    step_of = {f.tick: j for j in range(1, len(obs) + 1) for f in obs.frames(j, View.Global)}
    for step in range(1, len(obs) + 1):
        for p1 in range(0, 4):
            covered = {step_of[f.tick] for f in window(obs, step, p1)[View.Global]}
            assert len(covered) == min(p1 + 1, step) and max(covered) == step
    with pytest.raises(StepOutOfRange):
        window(obs, 0, 1)
    with pytest.raises(StepOutOfRange):
        window(obs, len(obs) + 1, 1)
    assert window_to_json(one, 1)["step"] == 1


def test_rasterize_pgm():
    trace, _ = _t1_trace()
    state = trace.final_state
    for view in View:
        img = rasterize(state, view, size=32)
        assert img.startswith(b"P5\n32 32\n255\n")
        assert len(img) == len(b"P5\n32 32\n255\n") + 32 * 32
        assert rasterize(state, view, size=32) == img
    assert any(px for px in rasterize(state, View.Global, size=32)[13:])
