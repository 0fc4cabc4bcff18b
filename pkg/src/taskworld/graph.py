"""Scene-conditioned object-action graph and the compositional reachability check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional, Sequence, Tuple

from .errors import InvalidParam, SliceViolation
from .predicates import Predicate, object_args
from .primitives import ALL_KINDS, ActionFlow, PrimitiveKind
from .scene import SceneConfig
from .tasks import ActionTransfer, ComplexTask, SimpleTask, derive_transfers
from .world import (
    TaskContext, WorldState, _check_ids, apply_transfer, evaluate_goal, execute_flow, initial_state,
)

DEFAULT_MAX_STEPS = 32


class Node(NamedTuple):
    object: str
    kind: PrimitiveKind
    step: int


@dataclass(frozen=True)
class TaskGraph:
    """Nodes are (object, action kind, step) triples, validated on demand rather than stored."""

    objects: Tuple[str, ...]
    actions: Tuple[PrimitiveKind, ...]
    max_steps: int
    inter_edges: Tuple[ActionTransfer, ...] = ()

    @property
    def node_count(self) -> int:
        return len(self.objects) * len(self.actions) * self.max_steps

    def has_node(self, n: Node) -> bool:
        return n.object in self.objects and n.kind in self.actions and 1 <= n.step <= self.max_steps

    def nodes(self) -> Iterator[Node]:
        for o in self.objects:
            for k in self.actions:
                for j in range(1, self.max_steps + 1):
                    yield Node(o, k, j)

    def admissible(self, u: Node, v: Node) -> bool:
        """Intra-task edges stay on one object and advance exactly one step."""
        return self.has_node(u) and self.has_node(v) and u.object == v.object and v.step == u.step + 1

    def intra_edges(self, nodes: Sequence[Node]) -> List[Tuple[Node, Node]]:
        return [(u, v) for u, v in zip(nodes, nodes[1:])]

    def with_transfers(self, transfers: Sequence[ActionTransfer]) -> "TaskGraph":
        return TaskGraph(self.objects, self.actions, self.max_steps, tuple(transfers))


def build_graph(scene: SceneConfig, max_steps: int = DEFAULT_MAX_STEPS) -> TaskGraph:
    if max_steps < 1:
        raise InvalidParam("max_steps must be >= 1")
    return TaskGraph(tuple(scene.ids), ALL_KINDS, max_steps)


def embed_flow(graph: TaskGraph, task: SimpleTask, flow: ActionFlow) -> List[Node]:
    """Place a flow in the target object's slice, one node per step."""
    if not flow:
        raise InvalidParam("flow must be non-empty")
    if len(flow) > graph.max_steps:
        raise InvalidParam(f"flow has {len(flow)} actions but max_steps is {graph.max_steps}")
    if task.target not in graph.objects:
        raise SliceViolation(f"target {task.target!r} is not a graph object")
    nodes = [Node(task.target, a.kind, j) for j, a in enumerate(flow, start=1)]
    for u, v in zip(nodes, nodes[1:]):
        if not graph.admissible(u, v):
            raise SliceViolation(f"edge {u} -> {v} leaves the target slice")
    return nodes


def _first_object(preds: Sequence[Predicate]) -> Optional[str]:
    for p in preds:
        args = object_args(p)
        if args:
            return args[0]
    return None


def check_boundary(prev_goal: Sequence[Predicate], next_init: Sequence[Predicate], state_after_prev: WorldState,
                   transfer: ActionTransfer | None = None) -> bool:
    """True when ``next_init`` holds right after the transfer out of the previous subtask."""
    if not next_init:
        raise InvalidParam("next_init must be a non-empty conjunction")
    if not prev_goal:
        raise InvalidParam("prev_goal must be a non-empty conjunction")
    for preds in (prev_goal, next_init):
        _check_ids(state_after_prev, [a for p in preds for a in object_args(p)])
    if transfer is None:
        prev = state_after_prev.context.target if state_after_prev.context else _first_object(prev_goal)
        transfer = ActionTransfer(prev or _first_object(next_init), _first_object(next_init) or prev)
    return evaluate_goal(apply_transfer(state_after_prev, transfer), next_init)


@dataclass(frozen=True)
class SegmentResult:
    executed: bool
    success: bool
    delta_release: Optional[int] = None
    delta_goal: Optional[int] = None

    def to_json(self) -> dict:
        return {"executed": self.executed, "success": self.success,
                "delta_release": self.delta_release, "delta_goal": self.delta_goal}


@dataclass(frozen=True)
class ReachabilityReport:
    feasible: bool
    segment_results: Tuple[SegmentResult, ...]
    transfer_results: Tuple[bool, ...]
    failing_index: Optional[int] = None
    failing_stage: Optional[str] = None
    final_state: Optional[WorldState] = field(default=None, compare=False, repr=False)

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "failing_index": self.failing_index,
            "failing_stage": self.failing_stage,
            "segments": [s.to_json() for s in self.segment_results],
            "transfers": [{"boundary_match": b} for b in self.transfer_results],
        }


def check_reachability(scene: SceneConfig, plan: ComplexTask, flows: Sequence[ActionFlow],
                       scales=None, start: WorldState | None = None) -> ReachabilityReport:
    """Run every segment in order and check every boundary.

    ``failing_index`` is 1-based: segment k or transfer k (the one leaving
    segment k), whichever fails first in execution order. Segments after a
    failure still run so the report is complete.
    """
    if len(flows) != len(plan.subtasks):
        raise InvalidParam(f"{len(plan.subtasks)} subtasks but {len(flows)} flows")
    transfers = plan.transfers or derive_transfers(plan.subtasks, flows)
    state = start.copy() if start is not None else initial_state(scene, scales=scales)
    segs: List[SegmentResult] = []
    bounds: List[bool] = []
    fail: Optional[Tuple[int, str]] = None
    for k, (task, flow) in enumerate(zip(plan.subtasks, flows), start=1):
        trace = execute_flow(state, flow, task)
        segs.append(SegmentResult(True, trace.success, trace.delta_release, trace.delta_goal))
        if not trace.success and fail is None:
            fail = (k, "segment")
        state = trace.final_state
        if k < len(plan.subtasks):
            nxt = plan.subtasks[k]
            e = transfers[k - 1]
            ok = check_boundary(task.goal, nxt.init, state, e)
            bounds.append(ok)
            if not ok and fail is None:
                fail = (k, "transfer")
            state = apply_transfer(state, e, TaskContext.of(nxt))
    return ReachabilityReport(fail is None, tuple(segs), tuple(bounds),
                              fail[0] if fail else None, fail[1] if fail else None, state)


__all__ = [
    "DEFAULT_MAX_STEPS", "Node", "ReachabilityReport", "SegmentResult", "TaskGraph", "build_graph",
    "check_boundary", "check_reachability", "embed_flow",
]
