"""Symbolic predicates in the BDDL style (``ontop``, ``inside``, ``open`` ...)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from .errors import InvalidParam

ONTOP = "ontop"
INSIDE = "inside"
OPEN = "open"
INROOM = "inroom"
INGRIPPER = "ingripper"

ARITY = {ONTOP: 2, INSIDE: 2, OPEN: 1, INROOM: 2, INGRIPPER: 1}
GRIPPER = "gripper"
ROBOT = "robot"
RESERVED = frozenset({GRIPPER, ROBOT})


@dataclass(frozen=True, order=True)
class Predicate:
    """A (possibly negated) ground predicate.

    ``(inside x gripper)`` is normalized to ``InGripper(x)`` on construction via
    :func:`make`, so both spellings compare equal.
    """

    name: str
    args: Tuple[str, ...]
    negated: bool = False

    def __post_init__(self):
        if self.name not in ARITY:
            raise InvalidParam(f"unknown predicate {self.name!r}")
        if len(self.args) != ARITY[self.name]:
            raise InvalidParam(f"{self.name} takes {ARITY[self.name]} argument(s), got {len(self.args)}")

    def negate(self) -> "Predicate":
        return Predicate(self.name, self.args, not self.negated)

    @property
    def positive(self) -> "Predicate":
        return Predicate(self.name, self.args, False) if self.negated else self

    def __str__(self) -> str:
        return format_predicate(self)


def make(name: str, *args: str, negated: bool = False) -> Predicate:
    name = name.lower()
    args = tuple(a.lower() for a in args)
    if name == INSIDE and len(args) == 2 and args[1] == GRIPPER:
        return Predicate(INGRIPPER, (args[0],), negated)
    return Predicate(name, args, negated)


def OnTop(a: str, b: str, negated: bool = False) -> Predicate:
    return make(ONTOP, a, b, negated=negated)


def Inside(a: str, b: str, negated: bool = False) -> Predicate:
    return make(INSIDE, a, b, negated=negated)


def Open(f: str, negated: bool = False) -> Predicate:
    return make(OPEN, f, negated=negated)


def InGripper(a: str, negated: bool = False) -> Predicate:
    return make(INGRIPPER, a, negated=negated)


def InRoom(x: str, room: str, negated: bool = False) -> Predicate:
    return make(INROOM, x, room, negated=negated)


def format_predicate(p: Predicate) -> str:
    """BDDL surface form; ``InGripper(x)`` prints as ``(inside x gripper)``."""
    if p.name == INGRIPPER:
        core = f"(inside {p.args[0]} {GRIPPER})"
    else:
        core = "(" + " ".join((p.name,) + p.args) + ")"
    return f"(not {core})" if p.negated else core


def object_args(p: Predicate) -> Tuple[str, ...]:
    """Arguments that name objects (room labels dropped, gripper kept)."""
    if p.name == INROOM:
        return (p.args[0],)
    if p.name == INGRIPPER:
        return (p.args[0], GRIPPER)
    return p.args
