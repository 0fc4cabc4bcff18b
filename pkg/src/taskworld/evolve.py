"""Self-evolution loop: execute, inspect each step, supervise a revised flow, retry.

Two critics are provided. :class:`OracleCritic` reads the execution trace and
applies a small fixed rulebook of repairs; :class:`RemoteCritic` forwards the
same inspector and supervisor roles to an HTTP endpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

from .codec import decode_flow, encode_flow
from .errors import (
    CriticUnavailable, EmptySequence, InitUnsatisfied, InvalidParam, IoError, MisalignedObservations,
    RepeatedProposal,
)
from .observe import ObservationSet, View, capture, window, window_to_json
from .predicates import INSIDE, ONTOP, OPEN, format_predicate
from .primitives import ARTICULATIONS, BASE_MOVES, EEF_MOVES, TURNS, ActionFlow, PrimitiveKind, act
from .remote import JsonClient, RemoteConfig, RemoteError, endpoint_from_env
from .tasks import ComplexTask, SimpleTask, derive_transfers
from .world import (
    EventKind, ExecutionTrace, TaskContext, WorldState, apply_transfer, evaluate_goal, evaluate_predicate,
    execute_flow,
)

K = PrimitiveKind

INITIAL_REASON = "initial plan"
DOOR_SIDESTEP = 0.3
SIDESTEP_BUMP = 0.15
PLACE_REACH_BUMP = 0.2
PLACE_LOWER = 0.3
CLOSE_WIDEN = 0.1
CLOSE_NUDGE = 0.1
MOTION_KINDS = frozenset(EEF_MOVES | BASE_MOVES | TURNS)


class Flag(Enum):
    Collision = "Collision"
    DoorDisturbed = "DoorDisturbed"
    GraspEmpty = "GraspEmpty"
    NotPlaced = "NotPlaced"
    NoProgress = "NoProgress"
    Ok = "Ok"


@dataclass(frozen=True)
class Critique:
    step_index: int  # 1-based
    text: str
    flags: frozenset

    def __post_init__(self):
        if not self.flags:
            raise ValueError("a critique needs at least one flag")
        if Flag.Ok in self.flags and len(self.flags) > 1:
            raise ValueError("Ok cannot be combined with failure flags")

    @property
    def ok(self) -> bool:
        return self.flags == frozenset({Flag.Ok})

    def to_json(self) -> dict:
        return {"step": self.step_index, "text": self.text, "flags": sorted(f.value for f in self.flags)}


@dataclass(frozen=True)
class EvolutionRecord:
    iteration: int
    flow: ActionFlow
    critiques: Tuple[Critique, ...]
    supervisor_reason: str
    success: bool

    def to_json(self) -> dict:
        return {"iter": self.iteration, "new_sequence": encode_flow(self.flow),
                "reason": self.supervisor_reason, "success": self.success}


class Outcome(Enum):
    Succeeded = "Succeeded"
    ExhaustedBudget = "ExhaustedBudget"


@dataclass
class EvolutionHistory:
    task: SimpleTask
    records: List[EvolutionRecord] = field(default_factory=list)
    outcome: Optional[Outcome] = None
    final_state: Optional[WorldState] = field(default=None, repr=False, compare=False)

    @property
    def flows(self) -> List[ActionFlow]:
        return [r.flow for r in self.records]

    @property
    def succeeded(self) -> bool:
        return self.outcome is Outcome.Succeeded

    @property
    def iterations_used(self) -> int:
        """Evolution iterations after the initial plan."""
        return max(len(self.records) - 1, 0)

    @property
    def failed_initially(self) -> bool:
        return bool(self.records) and not self.records[0].success

    @property
    def rescued(self) -> bool:
        return self.succeeded and self.failed_initially

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in self.records)

    def write_log(self, path: str | Path, append: bool = False) -> None:
        try:
            with open(path, "a" if append else "w", encoding="utf-8") as fh:
                fh.write(self.to_jsonl())
        except OSError as exc:
            raise IoError(f"cannot write evolution log {path}: {exc}") from None


@dataclass(frozen=True)
class EvolutionConfig:
    tau_max: int = 5
    p1: int = 1
    p2: int = 1
    max_frames_per_action: int = 6
    views: Tuple[View, ...] = (View.Global, View.Head)

    def __post_init__(self):
        if self.tau_max < 1:
            raise InvalidParam("tau_max must be >= 1")
        if self.p1 < 0:
            raise InvalidParam("p1 must be >= 0")
        if self.p2 < 1:
            raise InvalidParam("p2 must be >= 1")
        if self.max_frames_per_action < 1:
            raise InvalidParam("max_frames_per_action must be >= 1")
        if not self.views:
            raise InvalidParam("views must be non-empty")
        object.__setattr__(self, "views", tuple(View(v) if not isinstance(v, View) else v for v in self.views))


class Critic(Protocol):
    def inspect(self, trace: ExecutionTrace, obs: ObservationSet, cfg: EvolutionConfig) -> List[Critique]: ...

    def supervise(self, trace: ExecutionTrace, critiques: Sequence[Critique], task: SimpleTask,
                  history: EvolutionHistory, cfg: EvolutionConfig) -> Tuple[ActionFlow, str]: ...


def inspect_steps(trace: ExecutionTrace, obs: ObservationSet, critic: Critic,
                  cfg: EvolutionConfig | None = None) -> List[Critique]:
    if len(obs) != len(trace.steps):
        raise MisalignedObservations(f"{len(trace.steps)} steps but {len(obs)} observation groups")
    crits = critic.inspect(trace, obs, cfg or EvolutionConfig())
    if len(crits) != len(trace.steps):
        raise MisalignedObservations("critic must return one critique per step")
    return crits


def supervise(trace: ExecutionTrace, critiques: Sequence[Critique], task: SimpleTask, history: EvolutionHistory,
              critic: Critic, cfg: EvolutionConfig | None = None) -> Tuple[ActionFlow, str]:
    """Ask the critic for a revised flow; a flow already tried is an error."""
    flow, reason = critic.supervise(trace, critiques, task, history, cfg or EvolutionConfig())
    if not flow:
        raise EmptySequence("supervisor proposed an empty flow")
    seen = history.flows + [trace.flow]
    if tuple(flow) in seen:
        raise RepeatedProposal(f"supervisor repeated a flow already tried: {encode_flow(flow)}")
    return tuple(flow), reason


# ---------------------------------------------------------------- oracle critic

def _r(x: float) -> float:
    return round(x, 6)


def _place_goal(task: SimpleTask):
    return [p for p in task.goal if not p.negated and p.name in (INSIDE, ONTOP)]


def _open_goal(task: SimpleTask):
    return [p for p in task.goal if p.name == OPEN]


def _last_index(flow: ActionFlow, kind: PrimitiveKind) -> Optional[int]:
    for i in range(len(flow) - 1, -1, -1):
        if flow[i].kind is kind:
            return i
    return None


def _pre_state(trace: ExecutionTrace, i: int) -> WorldState:
    return trace.initial_state if i == 0 else trace.steps[i - 1].post_state


class OracleCritic:
    """Deterministic critic driven by trace events and predicate checks."""

    # -- inspector
    def inspect(self, trace: ExecutionTrace, obs: ObservationSet | None = None,
                cfg: EvolutionConfig | None = None) -> List[Critique]:
        task = trace.task
        flow = trace.flow
        last_ungrasp = _last_index(flow, K.UNGRASP)
        out = []
        for j, st in enumerate(trace.steps):
            flags, notes = set(), []
            kinds = {e.kind for e in st.events}
            for e in st.events:
                if e.kind is EventKind.Collision:
                    flags.add(Flag.Collision)
                    notes.append(e.detail)
                elif e.kind is EventKind.DoorDisturbed:
                    flags.update({Flag.Collision, Flag.DoorDisturbed})
                    notes.append(f"{e.subjects[0]} door pushed back ({e.detail})")
                elif e.kind is EventKind.GraspEmpty:
                    flags.add(Flag.GraspEmpty)
                    notes.append("gripper closed on nothing")
            if task is not None and j == last_ungrasp and _place_goal(task) \
                    and not evaluate_goal(st.post_state, _place_goal(task)):
                flags.add(Flag.NotPlaced)
                notes.append("released object did not end up at the goal support")
            if EventKind.Collision not in kinds:
                a = st.action
                short = st.achieved < 1.0 - 1e-9
                if a.kind in MOTION_KINDS and a.kind is not K.LIFT_EEF_DOWN and short:
                    flags.add(Flag.NoProgress)
                    notes.append(f"motion completed only {st.achieved:.0%}")
                elif a.kind in ARTICULATIONS and task is not None and _open_goal(task) \
                        and not evaluate_goal(st.post_state, _open_goal(task)):
                    flags.add(Flag.NoProgress)
                    notes.append("joint did not reach the goal state")
            if not flags:
                flags.add(Flag.Ok)
            text = f"Step {j + 1} {st.action}: " + ("; ".join(notes) if notes else "as expected")
            out.append(Critique(j + 1, text, frozenset(flags)))
        return out

    # -- supervisor
    def supervise(self, trace: ExecutionTrace, critiques: Sequence[Critique], task: SimpleTask,
                  history: EvolutionHistory | None = None, cfg: EvolutionConfig | None = None
                  ) -> Tuple[ActionFlow, str]:
        flow = list(trace.flow)
        flagged = {c.step_index - 1: c.flags for c in critiques}

        # door swung shut by a base or arm advance: side-step away from the door first
        for i, flags in sorted(flagged.items()):
            if Flag.DoorDisturbed in flags and (flow[i].kind in BASE_MOVES or flow[i].kind in EEF_MOVES):
                door = next(e.subjects[0] for e in trace.steps[i].events if e.kind is EventKind.DoorDisturbed)
                side = self._away_side(_pre_state(trace, i), door)
                prev = flow[i - 1] if i > 0 else None
                if prev is not None and prev.kind is side:
                    flow[i - 1] = act(side.name, _r(prev.param + SIDESTEP_BUMP))
                    what = f"widen the side-step to {flow[i - 1].param} m"
                else:
                    flow.insert(i, act(side.name, DOOR_SIDESTEP))
                    what = f"shift the base {side.name.rsplit('_', 1)[1].lower()} by {DOOR_SIDESTEP} m first"
                return tuple(flow), (f"Step {i + 1} {trace.flow[i]} swept into the swing volume of {door} and "
                                     f"knocked it partly closed. Keep the same approach but {what} so the "
                                     f"advance passes beside the door.")

        # empty grasp: re-align before closing the gripper
        for i, flags in sorted(flagged.items()):
            if Flag.GraspEmpty in flags:
                flow[i:i] = [act("RETREAT"), act("APPROACH"), act("CONVERGE")]
                return tuple(flow), (f"GRASP at step {i + 1} closed on empty space. Back off and run "
                                     f"APPROACH and CONVERGE again to re-align before grasping.")

        # fixture still open after a close
        residual = [p for p in _open_goal(task) if p.negated
                    and evaluate_predicate(trace.final_state, p.positive)]
        ci = _last_index(trace.flow, K.ARTICULATE_CLOSE)
        if residual and ci is not None and trace.flow[ci].range[1] < 1.0:
            lo, hi = trace.flow[ci].range
            flow[ci] = act("ARTICULATE_CLOSE", (lo, _r(min(1.0, hi + CLOSE_WIDEN))))
            ui = _last_index(tuple(flow), K.UNGRASP)
            extra = ""
            if ui is not None and not (ui > 0 and flow[ui - 1].kind is K.MOVE_EEF_FORWARD):
                flow.insert(ui, act("MOVE_EEF_FORWARD", CLOSE_NUDGE))
                extra = f" and push the door with MOVE_EEF_FORWARD({CLOSE_NUDGE}) before releasing"
            return tuple(flow), (f"{residual[0].args[0]} is still open after ARTICULATE_CLOSE{tuple(trace.flow[ci].range)}. "
                                 f"Extend the close range to {flow[ci].range}{extra}.")

        # released object missed the goal support
        for i, flags in sorted(flagged.items()):
            if Flag.NotPlaced in flags:
                ui = _last_index(tuple(flow), K.UNGRASP)
                mi = _last_index(tuple(flow[:ui]), K.MOVE_EEF_FORWARD)
                if mi is not None:
                    flow[mi] = act("MOVE_EEF_FORWARD", _r(flow[mi].param + PLACE_REACH_BUMP))
                else:
                    flow.insert(ui, act("MOVE_EEF_FORWARD", PLACE_REACH_BUMP))
                    ui += 1
                if flow[ui - 1].kind is not K.LIFT_EEF_DOWN:
                    flow.insert(ui, act("LIFT_EEF_DOWN", PLACE_LOWER))
                goal = format_predicate(_place_goal(task)[0])
                return tuple(flow), (f"The object was released short of its goal {goal}. Reach "
                                     f"{PLACE_REACH_BUMP} m further with the arm and lower it before UNGRASP.")

        # generic fallback: trim the stalled motion to what was achieved
        for i, flags in sorted(flagged.items()):
            if Flag.NoProgress in flags or Flag.Collision in flags:
                a = flow[i]
                if a.kind in MOTION_KINDS:
                    done = _r(a.param * trace.steps[i].achieved)
                    if done > 0 and done != a.param:
                        flow[i] = act(a.kind.name, done)
                        return tuple(flow), f"Step {i + 1} {a} stalled; limit it to {done}."
                    del flow[i]
                    if flow:
                        return tuple(flow), f"Step {i + 1} {a} made no progress; drop it."
        from .taskgen import plan_initial_flow

        return plan_initial_flow(task, trace.initial_state.scene, trace.initial_state.robot), \
            "No anomaly pinned down; fall back to the template plan."

    @staticmethod
    def _away_side(state: WorldState, door: str) -> PrimitiveKind:
        sv = state.specs[door].articulation.swept_volume
        cx, cy = (sv[0] + sv[3]) / 2, (sv[1] + sv[4]) / 2
        hx, hy = state.heading_vec
        lateral = (cx - state.base[0]) * -hy + (cy - state.base[1]) * hx
        return K.MOVE_BASE_RIGHT if lateral > 0 else K.MOVE_BASE_LEFT


# ---------------------------------------------------------------- remote critic

def task_to_json(task: SimpleTask) -> dict:
    return {"name": task.name, "description": task.description, "target": task.target,
            "support_init": task.support_init, "support_goal": task.support_goal,
            "init": [format_predicate(p) for p in task.init], "goal": [format_predicate(p) for p in task.goal]}


_KEYWORD_FLAGS = (("door", Flag.DoorDisturbed), ("collid", Flag.Collision), ("collision", Flag.Collision),
                  ("empty", Flag.GraspEmpty), ("miss", Flag.GraspEmpty), ("not placed", Flag.NotPlaced),
                  ("no progress", Flag.NoProgress), ("stuck", Flag.NoProgress))


def _flags_from_text(text: str) -> frozenset:
    low = text.lower()
    flags = {f for k, f in _KEYWORD_FLAGS if k in low}
    if Flag.DoorDisturbed in flags:
        flags.add(Flag.Collision)
    return frozenset(flags or {Flag.Ok})


class RemoteCritic:
    """Critic backed by an HTTP endpoint (``AGT_CRITIC_URL`` / ``AGT_CRITIC_TOKEN``)."""

    def __init__(self, url: str | None = None, token: str | None = None, config: RemoteConfig | None = None,
                 transport=None):
        if url is None:
            try:
                url, token = endpoint_from_env("AGT_CRITIC_URL", "AGT_CRITIC_TOKEN")
            except RemoteError as exc:
                raise CriticUnavailable(str(exc)) from None
        self.client = JsonClient(url, token, config, transport)

    def _post(self, payload: dict) -> Dict[str, Any]:
        try:
            resp = self.client.post(payload)
        except RemoteError as exc:
            raise CriticUnavailable(str(exc)) from None
        if not isinstance(resp, dict):
            raise CriticUnavailable("critic returned a non-object response")
        return resp

    def inspect(self, trace: ExecutionTrace, obs: ObservationSet, cfg: EvolutionConfig) -> List[Critique]:
        actions = encode_flow(trace.flow)
        out: List[Critique] = []
        for j in range(1, len(trace.steps) + 1):
            win = window(obs, j, cfg.p1)
            resp = self._post({"role": "inspector", "task": task_to_json(trace.task), "actions": actions,
                               "critiques": [c.text for c in out],
                               "observations": [window_to_json(win, j)], "history": []})
            texts = resp.get("observations")
            if not isinstance(texts, dict):
                raise CriticUnavailable("inspector response lacks 'observations'")
            text = str(texts.get(f"Step {j} observation", ""))
            raw = resp.get("flags")
            flags = frozenset(Flag(f) for f in raw) if raw else _flags_from_text(text)
            out.append(Critique(j, text or f"Step {j}: no comment", flags))
        return out

    def supervise(self, trace: ExecutionTrace, critiques: Sequence[Critique], task: SimpleTask,
                  history: EvolutionHistory, cfg: EvolutionConfig) -> Tuple[ActionFlow, str]:
        resp = self._post({
            "role": "supervisor", "task": task_to_json(task), "actions": encode_flow(trace.flow),
            "critiques": [c.text for c in critiques], "observations": [],
            "history": [{"new_sequence": encode_flow(r.flow), "reason": r.supervisor_reason}
                        for r in history.records],
        })
        if "new_sequence" not in resp:
            raise CriticUnavailable("supervisor response lacks 'new_sequence'")
        return decode_flow(resp["new_sequence"]), str(resp.get("reason", ""))


# ---------------------------------------------------------------- the loop

def evolve_subtask(world: WorldState, task: SimpleTask, flow0: ActionFlow, cfg: EvolutionConfig | None = None,
                   critic: Critic | None = None) -> EvolutionHistory:
    """Run up to ``tau_max + 1`` attempts, each from a fresh copy of ``world``."""
    cfg = cfg or EvolutionConfig()
    critic = critic or OracleCritic()
    entry = world.copy()
    entry.context = TaskContext.of(task)
    if not evaluate_goal(entry, task.init):
        raise InitUnsatisfied(f"init of {task.name} does not hold at entry")
    hist = EvolutionHistory(task)
    flow, reason = tuple(flow0), INITIAL_REASON
    for it in range(cfg.tau_max + 1):
        trace = execute_flow(entry.copy(), flow, task)
        hist.final_state = trace.final_state
        if trace.success:
            hist.records.append(EvolutionRecord(it, flow, (), reason, True))
            hist.outcome = Outcome.Succeeded
            return hist
        obs = capture(trace, cfg)
        crits = tuple(inspect_steps(trace, obs, critic, cfg))
        hist.records.append(EvolutionRecord(it, flow, crits, reason, False))
        if it == cfg.tau_max:
            break
        flow, reason = supervise(trace, crits, task, hist, critic, cfg)
    hist.outcome = Outcome.ExhaustedBudget
    return hist


@dataclass
class ComplexEvolution:
    task: ComplexTask
    histories: List[EvolutionHistory]
    success: bool
    final_state: Optional[WorldState] = field(default=None, repr=False)

    def to_jsonl(self) -> str:
        lines = []
        for k, h in enumerate(self.histories, start=1):
            for r in h.records:
                d = r.to_json()
                d["subtask"] = k
                lines.append(json.dumps(d, sort_keys=True))
        return "".join(line + "\n" for line in lines)


def evolve_complex(world: WorldState, plan: ComplexTask, flows: Sequence[ActionFlow],
                   cfg: EvolutionConfig | None = None, critic: Critic | None = None) -> ComplexEvolution:
    """Evolve subtasks in order; an exhausted subtask ends the episode."""
    if len(flows) != len(plan.subtasks):
        raise InvalidParam(f"{len(plan.subtasks)} subtasks but {len(flows)} flows")
    transfers = plan.transfers or derive_transfers(plan.subtasks, flows)
    state = world
    hists: List[EvolutionHistory] = []
    for k, (task, flow) in enumerate(zip(plan.subtasks, flows)):
        h = evolve_subtask(state, task, flow, cfg, critic)
        hists.append(h)
        state = h.final_state
        if not h.succeeded:
            return ComplexEvolution(plan, hists, False, state)
        if k + 1 < len(plan.subtasks):
            nxt = plan.subtasks[k + 1]
            state = apply_transfer(state, transfers[k], TaskContext.of(nxt))
    return ComplexEvolution(plan, hists, True, state)


__all__ = [
    "ComplexEvolution", "Critic", "Critique", "EvolutionConfig", "EvolutionHistory", "EvolutionRecord", "Flag",
    "INITIAL_REASON", "OracleCritic", "Outcome", "RemoteCritic", "evolve_complex", "evolve_subtask",
    "inspect_steps", "supervise", "task_to_json",
]
