from __future__ import annotations

import json

import httpx
import pytest

from conftest import bundle_for, scene_for
from fixture_tables import FAMILIES, WIRE_FIXTURES
from taskworld.bench import apply_faults
from taskworld.codec import decode_flow, encode_flow
from taskworld.errors import (
    CriticUnavailable, EmptySequence, InitUnsatisfied, InvalidParam, MisalignedObservations, RepeatedProposal,
)
from taskworld.evolve import (
    Critique, EvolutionConfig, EvolutionHistory, Flag, OracleCritic, Outcome, RemoteCritic, evolve_complex,
    evolve_subtask, inspect_steps, supervise,
)
from taskworld.observe import View, capture
from taskworld.primitives import PrimitiveKind, act, format_flow
from taskworld.remote import RemoteConfig
from taskworld.world import TaskContext, apply_transfer, execute_flow, initial_state, snapshot_predicates

FAST = RemoteConfig(timeout_s=1.0, retries=0, backoff_s=0.0)


def entry(family: str, k: int, faults=None):
    """World state at the entry of subtask ``k`` (0-based), running the reference flows before it."""
    b = bundle_for(family)
    scene = apply_faults(scene_for(FAMILIES[family][0]), faults or {})
    state = initial_state(scene, scales=b.scales)
    for j in range(k):
        state = execute_flow(state, b.flows[j], b.task.subtasks[j]).final_state
        state = apply_transfer(state, b.task.transfers[j], TaskContext.of(b.task.subtasks[j + 1]))
    return state, b


DOOR = {"door_swept_volume_blocks_path": True}


def test_config_validation():
    cfg = EvolutionConfig()
    assert (cfg.tau_max, cfg.p1, cfg.p2, cfg.max_frames_per_action) == (5, 1, 1, 6)
    assert cfg.views == (View.Global, View.Head)
    for bad in ({"tau_max": 0}, {"p1": -1}, {"p2": 0}, {"views": ()}, {"max_frames_per_action": 0}):
        with pytest.raises(InvalidParam):
            EvolutionConfig(**bad)
    assert EvolutionConfig(views=("Wrist",)).views == (View.Wrist,)


def test_critique_invariants():
    with pytest.raises(ValueError):
        Critique(1, "x", frozenset())
    with pytest.raises(ValueError):
        Critique(1, "x", frozenset({Flag.Ok, Flag.Collision}))
    assert Critique(1, "fine", frozenset({Flag.Ok})).ok


def test_door_collision_is_flagged():
    state, b = entry("T1", 2, DOOR)
    trace = execute_flow(state, b.flows[2], b.task.subtasks[2])
    crits = inspect_steps(trace, capture(trace), OracleCritic())
    assert crits[1].flags >= {Flag.Collision, Flag.DoorDisturbed}
    assert Flag.NotPlaced in crits[-1].flags
    assert [c.step_index for c in crits] == [1, 2, 3, 4]


def test_successful_trace_is_all_ok():
    state, b = entry("T1", 0)
    trace = execute_flow(state, b.flows[0], b.task.subtasks[0])
    assert all(c.ok for c in inspect_steps(trace, capture(trace), OracleCritic()))


def test_misaligned_observations():
    state, b = entry("T1", 0)
    trace = execute_flow(state, b.flows[0], b.task.subtasks[0])
    short = execute_flow(state, b.flows[0][:2], b.task.subtasks[0])
    with pytest.raises(MisalignedObservations):
        inspect_steps(trace, capture(short), OracleCritic())


def test_door_repair_inserts_sidestep():
    state, b = entry("T1", 2, DOOR)
    task = b.task.subtasks[2]
    trace = execute_flow(state, b.flows[2], task)
    crits = OracleCritic().inspect(trace)
    flow, reason = supervise(trace, crits, task, EvolutionHistory(task), OracleCritic())
    assert format_flow(flow) == ("NAVIGATE_TO_SUPPORT -> MOVE_BASE_LEFT(0.3) -> MOVE_BASE_FORWARD(0.4) -> "
                                 "MOVE_EEF_FORWARD(0.1) -> UNGRASP")
    assert "door" in reason.lower() or "refrigerator_0" in reason


def test_residual_open_close_repair():
    state, b = entry("T1", 3, {"stiff_door": 0.45})
    task = b.task.subtasks[3]
    trace = execute_flow(state, b.flows[3], task)
    assert not trace.success
    flow, _ = supervise(trace, OracleCritic().inspect(trace), task, EvolutionHistory(task), OracleCritic())
    assert encode_flow(flow) == json.loads(WIRE_FIXTURES[2])


def test_grasp_empty_repair():
    state, b = entry("T1", 1)
    task = b.task.subtasks[1]
    flow0 = (act("GRASP"), act("LIFT_EEF_UP", 0.2))
    trace = execute_flow(state, flow0, task)
    crits = OracleCritic().inspect(trace)
    assert Flag.GraspEmpty in crits[0].flags
    flow, _ = supervise(trace, crits, task, EvolutionHistory(task), OracleCritic())
    assert format_flow(flow) == "RETREAT -> APPROACH -> CONVERGE -> GRASP -> LIFT_EEF_UP(0.2)"


class _Parrot:
    """Critic that proposes whatever flow it is told to."""

    def __init__(self, flow):
        self.flow = flow

    def inspect(self, trace, obs, cfg):
        return [Critique(j, "?", frozenset({Flag.NoProgress})) for j in range(1, len(trace.steps) + 1)]

    def supervise(self, trace, critiques, task, history, cfg):
        return self.flow, "same again"


def test_repeated_proposal_is_an_error():
    state, b = entry("T1", 2, DOOR)
    task = b.task.subtasks[2]
    trace = execute_flow(state, b.flows[2], task)
    with pytest.raises(RepeatedProposal):
        supervise(trace, [], task, EvolutionHistory(task), _Parrot(b.flows[2]))
    with pytest.raises(EmptySequence):
        supervise(trace, [], task, EvolutionHistory(task), _Parrot(()))
    with pytest.raises(RepeatedProposal):
        evolve_subtask(state, task, b.flows[2], critic=_Parrot(b.flows[2]))


def test_door_scenario_converges_with_sidestep():
    state, b = entry("T1", 2, DOOR)
    h = evolve_subtask(state, b.task.subtasks[2], b.flows[2])
    assert h.outcome is Outcome.Succeeded
    assert h.iterations_used == 2
    assert any(a.kind is PrimitiveKind.MOVE_BASE_LEFT for a in h.records[-1].flow)
    assert h.records[-1].success and not any(r.success for r in h.records[:-1])
    assert h.rescued and h.failed_initially


def test_initial_success_exits_at_iteration_zero():
    state, b = entry("T3", 0)
    h = evolve_subtask(state, b.task.subtasks[0], b.flows[0])
    assert h.outcome is Outcome.Succeeded and h.iterations_used == 0 and len(h.records) == 1
    assert not h.failed_initially


def test_welded_target_exhausts_budget():
    state, b = entry("T3", 0, {"weld_target": "apple_0"})
    h = evolve_subtask(state, b.task.subtasks[0], b.flows[0], EvolutionConfig(tau_max=5))
    assert h.outcome is Outcome.ExhaustedBudget
    assert len(h.records) == 6 and h.iterations_used == 5
    assert [r.iteration for r in h.records] == list(range(6))
    assert len({r.flow for r in h.records}) == 6


@pytest.mark.parametrize("tau", [1, 2, 3])
def test_budget_law(tau):
    state, b = entry("T3", 0, {"weld_target": "apple_0"})
    h = evolve_subtask(state, b.task.subtasks[0], b.flows[0], EvolutionConfig(tau_max=tau))
    assert len(h.records) == tau + 1


def test_init_unsatisfied():
    state, b = entry("T1", 0)
    with pytest.raises(InitUnsatisfied):
        evolve_subtask(state, b.task.subtasks[2], b.flows[2])


class _Recording(OracleCritic):
    def __init__(self):
        self.starts = []

    def inspect(self, trace, obs=None, cfg=None):
        self.starts.append(snapshot_predicates(trace.initial_state))
        return super().inspect(trace, obs, cfg)


def test_every_iteration_starts_from_entry():
    state, b = entry("T3", 0, {"weld_target": "apple_0"})
    critic = _Recording()
    evolve_subtask(state, b.task.subtasks[0], b.flows[0], critic=critic)
    assert len(critic.starts) == 6
    assert all(s == snapshot_predicates(state) for s in critic.starts)


def test_oracle_reruns_are_byte_identical():
    logs = []
    for _ in range(2):
        state, b = entry("T1", 0, DOOR)
        evo = evolve_complex(state, b.task, b.flows)
        logs.append(evo.to_jsonl())
    assert logs[0] == logs[1]
    assert evo.success


def test_complex_rim_offset_and_nominal():
    state, b = entry("T3", 0, {"bowl_rim_offset": 0.2})
    evo = evolve_complex(state, b.task, b.flows)
    assert evo.success and len(evo.histories[1].records) > 1
    state, b = entry("T4", 0)
    evo = evolve_complex(state, b.task, b.flows)
    assert evo.success and all(len(h.records) == 1 for h in evo.histories)


def test_exhausted_subtask_stops_the_episode():
    state, b = entry("T3", 0, {"weld_target": "apple_0"})
    evo = evolve_complex(state, b.task, b.flows)
    assert not evo.success and len(evo.histories) == 1


def test_evolution_log_format(tmp_path):
    state, b = entry("T1", 2, DOOR)
    h = evolve_subtask(state, b.task.subtasks[2], b.flows[2])
    path = tmp_path / "evo.jsonl"
    h.write_log(path)
    rows = [json.loads(x) for x in path.read_text().splitlines()]
    assert [set(r) for r in rows] == [{"iter", "new_sequence", "reason", "success"}] * len(h.records)
    assert decode_flow(rows[1]["new_sequence"]) == h.records[1].flow
    assert rows[-1]["success"] is True


# ---------------------------------------------------------------- remote critic

def test_remote_critic_wire_format():
    state, b = entry("T1", 2, DOOR)
    task = b.task.subtasks[2]
    calls = []
    fixed = json.loads(WIRE_FIXTURES[1])

    def handler(request):
        body = json.loads(request.content)
        calls.append(body)
        if body["role"] == "inspector":
            step = body["observations"][0]["step"]
            text = "the arm collides with the open door" if step == 2 else "looks fine"
            return httpx.Response(200, json={"observations": {f"Step {step} observation": text}})
        return httpx.Response(200, json={"reason": "go around the door", "new_sequence": fixed})

    critic = RemoteCritic("http://critic.test", "t", FAST, httpx.MockTransport(handler))
    h = evolve_subtask(state, task, b.flows[2], EvolutionConfig(tau_max=1), critic)
    first = encode_flow(b.flows[2])
    inspector = [c for c in calls if c["role"] == "inspector" and c["actions"] == first]
    assert len(inspector) == len(b.flows[2])
    assert set(inspector[0]) == {"role", "task", "actions", "critiques", "observations", "history"}
    assert set(inspector[0]["observations"][0]["views"]) == {"Global", "Head"}
    assert Flag.DoorDisturbed in h.records[0].critiques[1].flags
    assert h.records[1].flow == decode_flow(fixed)
    assert h.records[1].supervisor_reason == "go around the door"
    sup = [c for c in calls if c["role"] == "supervisor"][0]
    assert sup["history"][0]["new_sequence"] == first
    assert [c["critiques"] for c in inspector[:2]] == [[], ["looks fine"]]


def test_remote_critic_unavailable(monkeypatch):
    monkeypatch.delenv("AGT_CRITIC_URL", raising=False)
    with pytest.raises(CriticUnavailable):
        RemoteCritic()
    state, b = entry("T1", 2, DOOR)
    critic = RemoteCritic("http://critic.test", None, FAST, httpx.MockTransport(lambda r: httpx.Response(500)))
    with pytest.raises(CriticUnavailable):
        evolve_subtask(state, b.task.subtasks[2], b.flows[2], critic=critic)
