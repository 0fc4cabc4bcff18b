"""The 21-primitive action library, parameter shapes, and text formatting.

An action flow is a plain tuple of :class:`PrimitiveAction` values, which keeps
flows hashable (the evolution loop relies on that for its no-repeat rule).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

from .errors import InvalidParam


class ParamKind(Enum):
    NONE = "none"
    METERS = "meters"
    DEGREES = "degrees"
    RANGE = "range"


class PrimitiveKind(Enum):
    """Primitive kinds; the value is the integer ID used by the wire codec.

    IDs 1, 2, 3, 5, 8, 9, 13, 15, 17, 18 and 19 appear in published evolution
    logs. The rest are inferred from the library's grouping (see ``ANCHORED_IDS``).
    ID 6 is reserved and unused.
    """

    APPROACH = 1
    CONVERGE = 2
    GRASP = 3
    RETREAT = 4
    UNGRASP = 5
    LIFT_EEF_UP = 7
    LIFT_EEF_DOWN = 8
    MOVE_EEF_FORWARD = 9
    MOVE_EEF_BACKWARD = 10
    MOVE_EEF_LEFT = 11
    MOVE_EEF_RIGHT = 12
    MOVE_BASE_FORWARD = 13
    MOVE_BASE_BACKWARD = 14
    MOVE_BASE_LEFT = 15
    MOVE_BASE_RIGHT = 16
    NAVIGATE_TO_TARGET = 17
    NAVIGATE_TO_SUPPORT = 18
    ARTICULATE_CLOSE = 19
    ARTICULATE_OPEN = 20
    TURN_BASE_LEFT = 21
    TURN_BASE_RIGHT = 22

    @property
    def wire_id(self) -> int:
        return self.value

    @property
    def param_kind(self) -> ParamKind:
        return _PARAM_KIND[self]


CODEC_VERSION = 1
ANCHORED_IDS = frozenset({1, 2, 3, 5, 8, 9, 13, 15, 17, 18, 19})
RESERVED_IDS = frozenset({6})

K = PrimitiveKind
CONTEXT_AWARE = frozenset({
    K.APPROACH, K.CONVERGE, K.GRASP, K.UNGRASP, K.RETREAT,
    K.NAVIGATE_TO_TARGET, K.NAVIGATE_TO_SUPPORT,
})
EEF_MOVES = frozenset({
    K.LIFT_EEF_UP, K.LIFT_EEF_DOWN, K.MOVE_EEF_FORWARD, K.MOVE_EEF_BACKWARD,
    K.MOVE_EEF_LEFT, K.MOVE_EEF_RIGHT,
})
BASE_MOVES = frozenset({
    K.MOVE_BASE_FORWARD, K.MOVE_BASE_BACKWARD, K.MOVE_BASE_LEFT, K.MOVE_BASE_RIGHT,
})
TURNS = frozenset({K.TURN_BASE_LEFT, K.TURN_BASE_RIGHT})
ARTICULATIONS = frozenset({K.ARTICULATE_OPEN, K.ARTICULATE_CLOSE})

_PARAM_KIND = {
    **{k: ParamKind.NONE for k in CONTEXT_AWARE},
    **{k: ParamKind.METERS for k in EEF_MOVES | BASE_MOVES},
    **{k: ParamKind.DEGREES for k in TURNS},
    **{k: ParamKind.RANGE for k in ARTICULATIONS},
}
assert len(_PARAM_KIND) == 21

ALL_KINDS: Tuple[PrimitiveKind, ...] = tuple(PrimitiveKind)
BY_WIRE_ID = {k.wire_id: k for k in ALL_KINDS}

DEFAULT_RANGE = (0.0, 1.0)

Number = Union[int, float]
Param = Union[None, Number, Tuple[Number, Number]]


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class PrimitiveAction:
    """One primitive with its parameter.

    ``param`` is None for context-aware kinds, a non-negative number for
    translations (meters) and turns (degrees), and a ``(min, max)`` pair within
    [0, 1] for articulation. ``None`` on an articulation kind is the
    default-range sentinel.
    """

    kind: PrimitiveKind
    param: Param = None

    def __post_init__(self):
        validate_param(self.kind, self.param)

    @property
    def range(self) -> Tuple[float, float]:
        if self.kind.param_kind is not ParamKind.RANGE:
            raise InvalidParam(f"{self.kind.name} has no range")
        return DEFAULT_RANGE if self.param is None else self.param  # type: ignore[return-value]

    def __str__(self) -> str:
        if self.param is None:
            return self.kind.name
        if isinstance(self.param, tuple):
            return f"{self.kind.name}({self.param[0]!r}, {self.param[1]!r})"
        return f"{self.kind.name}({self.param!r})"


ActionFlow = Tuple[PrimitiveAction, ...]


def validate_param(kind: PrimitiveKind, param: Param) -> None:
    pk = kind.param_kind
    if pk is ParamKind.NONE:
        if param is not None:
            raise InvalidParam(f"{kind.name} takes no parameter, got {param!r}")
    elif pk in (ParamKind.METERS, ParamKind.DEGREES):
        if not _is_number(param):
            raise InvalidParam(f"{kind.name} needs a scalar, got {param!r}")
        if param < 0:
            raise InvalidParam(f"{kind.name} needs a non-negative scalar, got {param!r}")
    else:
        if param is None:
            return
        if not (isinstance(param, tuple) and len(param) == 2 and all(_is_number(v) for v in param)):
            raise InvalidParam(f"{kind.name} needs a (min, max) range, got {param!r}")
        lo, hi = param
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidParam(f"{kind.name} range must satisfy 0 <= min <= max <= 1, got {param!r}")


def act(name: str | PrimitiveKind, param: Param = None) -> PrimitiveAction:
    kind = name if isinstance(name, PrimitiveKind) else PrimitiveKind[name]
    if isinstance(param, list):
        param = tuple(param)
    return PrimitiveAction(kind, param)


def format_flow(flow) -> str:
    return " -> ".join(str(a) for a in flow)


_TOKEN = re.compile(r"^([A-Z_]+)(?:\((.*)\))?$")


def parse_flow(text: str) -> ActionFlow:
    """Parse ``"APPROACH -> MOVE_BASE_FORWARD(0.4) -> ARTICULATE_CLOSE(0.0, 0.5)"``.

    Accepts ``->`` or ``→`` as separators. Numbers keep their literal type
    (``45`` stays an int) so that formatting round-trips.
    """
    out = []
    for token in re.split(r"\s*(?:->|→)\s*", text.strip()):
        m = _TOKEN.match(token.strip())
        if not m or m.group(1) not in PrimitiveKind.__members__:
            raise InvalidParam(f"cannot parse action token {token!r}")
        kind = PrimitiveKind[m.group(1)]
        raw = m.group(2)
        if raw is None:
            param: Param = None
        else:
            nums = tuple(_num(v) for v in raw.split(","))
            param = nums if len(nums) == 2 else nums[0]
        out.append(PrimitiveAction(kind, param))
    return tuple(out)


def _num(text: str) -> Number:
    text = text.strip()
    return float(text) if any(c in text for c in ".eE") else int(text)
