"""The ``new_sequence`` wire format for action flows.

Parameter-free actions are bare integer IDs, scalar parameters become
``{"<id>": value}`` and articulation ranges ``{"<id>": [min, max]}``. An
articulation with the default range encodes as its bare ID.
"""

from __future__ import annotations

import json
from typing import Any, List

from .errors import EmptySequence, InvalidParam, ParamShapeMismatch, UnknownActionId
from .primitives import BY_WIRE_ID, ActionFlow, ParamKind, PrimitiveAction, validate_param


def encode_action(a: PrimitiveAction) -> Any:
    wid = a.kind.wire_id
    if a.param is None:
        return wid
    if isinstance(a.param, tuple):
        return {str(wid): [a.param[0], a.param[1]]}
    return {str(wid): a.param}


def encode_flow(flow: ActionFlow) -> List[Any]:
    return [encode_action(a) for a in flow]


def _kind(raw_id: Any):
    try:
        wid = int(raw_id)
    except (TypeError, ValueError):
        raise UnknownActionId(f"action id {raw_id!r} is not an integer") from None
    if isinstance(raw_id, str) and str(wid) != raw_id.strip():
        raise UnknownActionId(f"action id {raw_id!r} is not an integer")
    if wid not in BY_WIRE_ID:
        raise UnknownActionId(f"unknown action id {wid}")
    return BY_WIRE_ID[wid]


def decode_action(item: Any) -> PrimitiveAction:
    if isinstance(item, bool):
        raise ParamShapeMismatch(f"booleans are not actions: {item!r}")
    if isinstance(item, int):
        kind = _kind(item)
        if kind.param_kind in (ParamKind.METERS, ParamKind.DEGREES):
            raise ParamShapeMismatch(f"{kind.name} needs a parameter")
        return PrimitiveAction(kind, None)
    if isinstance(item, dict):
        if len(item) != 1:
            raise ParamShapeMismatch(f"parameterized action must have exactly one key: {item!r}")
        (raw_id, value), = item.items()
        kind = _kind(raw_id)
        if kind.param_kind is ParamKind.NONE:
            raise ParamShapeMismatch(f"{kind.name} takes no parameter")
        if kind.param_kind is ParamKind.RANGE:
            if not isinstance(value, list) or len(value) != 2:
                raise ParamShapeMismatch(f"{kind.name} needs a [min, max] range")
            param: Any = (value[0], value[1])
        else:
            if isinstance(value, list):
                raise ParamShapeMismatch(f"{kind.name} needs a scalar")
            param = value
        try:
            validate_param(kind, param)
        except InvalidParam as exc:
            raise ParamShapeMismatch(str(exc)) from None
        return PrimitiveAction(kind, param)
    raise ParamShapeMismatch(f"cannot decode action {item!r}")


def decode_flow(wire: Any) -> ActionFlow:
    if isinstance(wire, str):
        wire = json.loads(wire)
    if not isinstance(wire, list):
        raise ParamShapeMismatch("new_sequence must be a JSON array")
    if not wire:
        raise EmptySequence("new_sequence is empty")
    return tuple(decode_action(x) for x in wire)


def canonical_json(value: Any) -> str:
    """Compact, key-sorted JSON used for byte-level comparisons."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"))
