"""Task tuples shared by the generator, the simulator and the evolution loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

from .predicates import Predicate
from .primitives import PrimitiveKind


@dataclass(frozen=True)
class SimpleTask:
    """The tuple (target, initial support, goal support, init, goal) plus naming."""

    name: str
    description: str
    target: str
    support_init: Optional[str]
    support_goal: Optional[str]
    init: Tuple[Predicate, ...]
    goal: Tuple[Predicate, ...]
    bddl_category: str = ""
    kind: str = ""

    def __post_init__(self):
        if not self.target:
            raise ValueError("a simple task needs a target object")
        if not self.init or not self.goal:
            raise ValueError("init and goal must be non-empty conjunctions")

    @property
    def context_ids(self) -> frozenset:
        return frozenset(x for x in (self.target, self.support_init, self.support_goal) if x)


@dataclass(frozen=True)
class ActionTransfer:
    """Zero-duration bridge between two consecutive simple tasks."""

    prev_target: str
    next_target: str
    end_action: Optional[PrimitiveKind] = None
    start_action: Optional[PrimitiveKind] = None


@dataclass(frozen=True)
class ComplexTask:
    name: str
    detail: str
    subtasks: Tuple[SimpleTask, ...]
    transfers: Tuple[ActionTransfer, ...] = field(default=())

    def __post_init__(self):
        if not self.subtasks:
            raise ValueError("a complex task needs at least one subtask")
        if len(self.transfers) != len(self.subtasks) - 1:
            raise ValueError("need exactly one transfer between consecutive subtasks")


def derive_transfers(subtasks, flows=None) -> Tuple[ActionTransfer, ...]:
    out = []
    for k in range(len(subtasks) - 1):
        end = flows[k][-1].kind if flows else None
        start = flows[k + 1][0].kind if flows else None
        out.append(ActionTransfer(subtasks[k].target, subtasks[k + 1].target, end, start))
    return tuple(out)
