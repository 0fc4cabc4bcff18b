"""Deterministic kinematic micro-simulator.

The robot is a square base with a point-like wrist (``eef``) on an arm whose
offsets live in the base frame. The fingertip centre ("grip") sits
``converge_offset`` ahead of the wrist along the base heading, so CONVERGE puts
the grip exactly on the grasp point.

Motions are kinematic. Base and arm translations are swept in 1 cm samples
(turns in 1 degree samples) and stop at the first new contact. Context-aware
primitives (APPROACH, CONVERGE, RETREAT, NAVIGATE_*) are planned moves and are
not swept.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import InvalidParam, MissingContext, UnknownObject
from .geometry import (
    Box, box_from_center, contains, dominant_axis, open_shell, overlaps, point_in_rect,
    rect_in_bounds, rect_overlaps_box, shrink,
)
from .predicates import (
    GRIPPER, INGRIPPER, INROOM, INSIDE, ONTOP, OPEN, ROBOT, Predicate, make, object_args,
)
from .primitives import (
    ARTICULATIONS, BASE_MOVES, EEF_MOVES, TURNS, ActionFlow, PrimitiveAction, PrimitiveKind,
    validate_param,
)
from .scene import ObjectClass, ObjectSpec, RobotConfig, SceneConfig, apply_scales
from .tasks import ActionTransfer, SimpleTask

K = PrimitiveKind

EPS_Z = 0.01            # OnTop contact tolerance
WALL = 0.03             # fixture wall thickness
CONTAINER_FLOOR = 0.02  # container floor thickness
DOOR_DELTA = 0.5        # joint fraction lost when a door is bumped
CLOSE_MARGIN = 0.1      # close sweeps shorter than threshold + margin leave a residual
DROP_EVENT_HEIGHT = 0.02
STEP_M = 0.01
STEP_DEG = 1.0
NAV_PUSHBACK_LIMIT = 1.5

DURATION = {K.NAVIGATE_TO_TARGET: 5, K.NAVIGATE_TO_SUPPORT: 5,
            K.ARTICULATE_OPEN: 6, K.ARTICULATE_CLOSE: 6, K.GRASP: 2, K.UNGRASP: 2}


def duration_ticks(kind: PrimitiveKind) -> int:
    return DURATION.get(kind, 4)


class Gripper(Enum):
    Open = "open"
    Closed = "closed"


class EventKind(Enum):
    Collision = "Collision"
    DoorDisturbed = "DoorDisturbed"
    GraspEmpty = "GraspEmpty"
    ObjectDropped = "ObjectDropped"
    NavArrived = "NavArrived"
    JointMoved = "JointMoved"
    Transfer = "Transfer"


@dataclass(frozen=True)
class ExecutionEvent:
    tick: int
    kind: EventKind
    subjects: Tuple[str, ...] = ()
    detail: str = ""

    def to_json(self) -> dict:
        return {"tick": self.tick, "kind": self.kind.value, "subjects": list(self.subjects), "detail": self.detail}


@dataclass(frozen=True)
class TaskContext:
    target: str
    support_init: Optional[str] = None
    support_goal: Optional[str] = None

    @property
    def ids(self) -> frozenset:
        return frozenset(x for x in (self.target, self.support_init, self.support_goal) if x)

    @property
    def supports(self) -> frozenset:
        return frozenset(x for x in (self.support_init, self.support_goal) if x)

    @classmethod
    def of(cls, task: SimpleTask) -> "TaskContext":
        return cls(task.target, task.support_init, task.support_goal)


@dataclass
class WorldState:
    """Global world state. Treated as a value: operations return fresh copies."""

    scene: SceneConfig
    robot: RobotConfig
    centers: Dict[str, Tuple[float, float, float]]
    extents: Dict[str, Tuple[float, float, float]]
    scales: Dict[str, float]
    joints: Dict[str, float]
    base: Tuple[float, float, float]                 # x, y, heading
    arm: Tuple[float, float, float]                  # forward, lateral (base frame), absolute z
    gripper: Gripper = Gripper.Open
    held_object: Optional[str] = None
    held_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)  # object centre minus grip, base frame
    grasped_handle: Optional[str] = None
    tick: int = 0
    events: List[ExecutionEvent] = field(default_factory=list)
    context: Optional[TaskContext] = None
    specs: Dict[str, ObjectSpec] = field(default_factory=dict, repr=False, compare=False)

    # -- construction / copying
    def copy(self) -> "WorldState":
        return replace(self, centers=dict(self.centers), extents=dict(self.extents),
                       scales=dict(self.scales), joints=dict(self.joints), events=list(self.events))

    @property
    def object_poses(self) -> Dict[str, Tuple[Tuple[float, float, float], float]]:
        return {oid: (c, self.specs[oid].yaw) for oid, c in self.centers.items()}

    def spec(self, oid: str) -> ObjectSpec:
        try:
            return self.specs[oid]
        except KeyError:
            raise UnknownObject(f"unknown object {oid!r}") from None

    def box(self, oid: str) -> Box:
        return box_from_center(self.centers[oid], self.extents[oid])

    # -- kinematics
    @property
    def heading_vec(self) -> Tuple[float, float]:
        return math.cos(self.base[2]), math.sin(self.base[2])

    def _to_world(self, fwd: float, lat: float) -> Tuple[float, float]:
        c, s = self.heading_vec
        return self.base[0] + c * fwd - s * lat, self.base[1] + s * fwd + c * lat

    @property
    def eef(self) -> Tuple[float, float, float]:
        x, y = self._to_world(self.arm[0], self.arm[1])
        return x, y, self.arm[2]

    @property
    def grip(self) -> Tuple[float, float, float]:
        x, y = self._to_world(self.arm[0] + self.robot.converge_offset, self.arm[1])
        return x, y, self.arm[2]

    def is_open(self, oid: str) -> bool:
        art = self.spec(oid).articulation
        return art is not None and self.joints[oid] >= art.open_threshold - 1e-12

    def snapshot_json(self) -> dict:
        """Compact deterministic summary (used by traces and observation payloads)."""
        return {
            "tick": self.tick,
            "base": [round(v, 6) for v in self.base],
            "eef": [round(v, 6) for v in self.eef],
            "gripper": self.gripper.value,
            "held": self.held_object,
            "handle": self.grasped_handle,
            "joints": {k: round(v, 6) for k, v in sorted(self.joints.items())},
            "objects": {k: [round(v, 6) for v in self.centers[k]] for k in sorted(self.centers)},
        }


def initial_state(scene: SceneConfig, robot: RobotConfig | None = None,
                  context: TaskContext | None = None, scales: Dict[str, float] | None = None) -> WorldState:
    """World state at tick 0, with graspability ``scales`` applied to the object sizes."""
    robot = robot or RobotConfig()
    scales = dict(scales or {})
    scene = apply_scales(scene, scales)
    specs = {o.id: o for o in scene.objects}
    if scene.robot is not None:
        base = (scene.robot.base[0], scene.robot.base[1], scene.robot.heading)
    else:
        base = (robot.base_footprint[0], robot.base_footprint[1], 0.0)
    return WorldState(
        scene=scene,
        robot=robot,
        centers={o.id: tuple(o.position) for o in scene.objects},
        extents={o.id: tuple(o.world_extents) for o in scene.objects},
        scales={o.id: scales.get(o.id, 1.0) for o in scene.objects},
        joints={o.id: o.articulation.joint_fraction for o in scene.objects if o.articulation},
        base=base,
        arm=(robot.carry_forward, 0.0, robot.carry_height),
        context=context,
        specs=specs,
    )


# ---------------------------------------------------------------- predicates

def _check_ids(state: WorldState, ids: Iterable[str]) -> None:
    for i in ids:
        if i not in state.specs and i not in (GRIPPER, ROBOT):
            raise UnknownObject(f"unknown object {i!r}")


def _interior(state: WorldState, oid: str) -> Box:
    b = state.box(oid)
    if state.specs[oid].object_class is ObjectClass.FixtureA:
        return shrink(b, WALL)
    return b


def _room_box(state: WorldState, room: str) -> Optional[Box]:
    for name, b in state.scene.room_regions:
        if name == room:
            return b
    return None


def _raw_truth(state: WorldState, p: Predicate) -> bool:
    a = p.args
    if p.name == INGRIPPER:
        return state.held_object == a[0]
    if p.name == OPEN:
        return state.is_open(a[0])
    if p.name == INROOM:
        x, room = a
        if room not in state.scene.rooms and _room_box(state, room) is None:
            return False
        region = _room_box(state, room)
        if x == ROBOT:
            if region is None:
                return room == (state.scene.rooms[0] if state.scene.rooms else room)
            return point_in_rect(state.base[0], state.base[1], region, 0.0)
        if region is None:
            return state.specs[x].room == room
        c = state.centers[x]
        return point_in_rect(c[0], c[1], region, 0.0)
    x, y = a
    if x == y or x in (GRIPPER, ROBOT) or y in (GRIPPER, ROBOT):
        return p.name == INSIDE and y == GRIPPER and state.held_object == x
    if state.held_object in (x, y):
        return False
    if p.name == ONTOP:
        bx, by = state.box(x), state.box(y)
        if abs(bx[2] - by[5]) > EPS_Z:
            return False
        cx, cy = state.centers[x][0], state.centers[x][1]
        return point_in_rect(cx, cy, by, 0.0)
    if p.name == INSIDE:
        return contains(_interior(state, y), state.box(x))
    return False


def evaluate_predicate(state: WorldState, p: Predicate) -> bool:
    _check_ids(state, p.args if p.name != INROOM else p.args[:1])
    v = _raw_truth(state, p)
    return (not v) if p.negated else v


def evaluate_goal(state: WorldState, goal: Sequence[Predicate]) -> bool:
    if not goal:
        raise InvalidParam("goal conjunction must be non-empty")
    ok = True
    for p in goal:
        ok = evaluate_predicate(state, p) and ok  # evaluate all so unknown ids always raise
    return ok


def all_predicates(state: WorldState) -> List[Predicate]:
    """Every ground predicate the snapshot tracks, in a fixed order."""
    ids = sorted(state.specs)
    preds: List[Predicate] = []
    for a in ids:
        for b in ids:
            if a != b:
                preds.append(Predicate(ONTOP, (a, b)))
                preds.append(Predicate(INSIDE, (a, b)))
    for a in ids:
        if state.specs[a].articulation is not None:
            preds.append(Predicate(OPEN, (a,)))
        if state.specs[a].object_class is ObjectClass.ManipulableB:
            preds.append(Predicate(INGRIPPER, (a,)))
    for room in sorted(set(state.scene.rooms) | {n for n, _ in state.scene.room_regions}):
        preds.append(Predicate(INROOM, (ROBOT, room)))
    return preds


def snapshot_predicates(state: WorldState) -> Dict[Predicate, bool]:
    """Valuation of every tracked predicate (ordered dict, deterministic order)."""
    return {p: _raw_truth(state, p) for p in all_predicates(state)}


def changed_pairs(before: Dict[Predicate, bool], after: Dict[Predicate, bool]) -> frozenset:
    out = set()
    for p, v in after.items():
        if before.get(p) != v:
            out.add(tuple(sorted(object_args(p))))
    return frozenset(out)


# ---------------------------------------------------------------- collision model

def _blockers(state: WorldState, oid: str, part: str) -> List[Box]:
    """Boxes of ``oid`` that block robot body ``part`` ("base", "probe" or "held")."""
    if oid == state.held_object:
        return []
    if part != "base" and oid == state.grasped_handle:
        return []
    spec = state.specs[oid]
    box = state.box(oid)
    ctx = state.context
    if ctx is not None and oid in ctx.ids:
        if spec.articulation is not None and state.is_open(oid):
            axis, sign = dominant_axis(*spec.front)
            return open_shell(box, WALL, axis, sign)
        if spec.is_container:
            return open_shell(box, CONTAINER_FLOOR, 0, 1, open_top=True)
    return [box]


def _door_boxes(state: WorldState) -> List[Tuple[str, Box]]:
    return [(oid, s.articulation.swept_volume) for oid, s in state.specs.items()
            if s.articulation is not None and state.joints[oid] > 0.0 and oid != state.grasped_handle]


def _parts(state: WorldState) -> Dict[str, Box]:
    """Axis-aligned robot parts (the base is handled separately as an oriented rect)."""
    p = state.robot.probe_size
    parts = {"probe": box_from_center(state.eef, (p, p, p))}
    if state.held_object is not None:
        parts["held"] = state.box(state.held_object)
    return parts


def _contacts(state: WorldState) -> Tuple[set, set]:
    """(solid contacts, door contacts) as sets of (part, object, slab index)."""
    rb = state.robot
    hx, hy = rb.base_footprint[0] / 2, rb.base_footprint[1] / 2
    bx, by, th = state.base
    parts = _parts(state)
    solid, doors = set(), set()
    for oid in state.specs:
        for part in ("base", "probe", "held"):
            if part != "base" and part not in parts:
                continue
            for i, b in enumerate(_blockers(state, oid, part)):
                if part == "base":
                    hit = rect_overlaps_box(bx, by, hx, hy, th, 0.0, rb.base_height, b)
                else:
                    hit = overlaps(parts[part], b)
                if hit:
                    solid.add((part, oid, i))
    for oid, b in _door_boxes(state):
        hit = rect_overlaps_box(bx, by, hx, hy, th, 0.0, rb.base_height, b) or any(
            overlaps(pb, b) for pb in parts.values())
        if hit:
            doors.add(oid)
    return solid, doors


def _sync_held(state: WorldState) -> None:
    if state.held_object is None:
        return
    g = state.grip
    c, s = state.heading_vec
    f, l, dz = state.held_offset
    state.centers[state.held_object] = (g[0] + c * f - s * l, g[1] + s * f + c * l, g[2] + dz)


def _sweep(state: WorldState, configs: Sequence[Tuple[Tuple[float, float, float], Tuple[float, float, float]]],
           downward: bool) -> Tuple[float, List[Tuple[EventKind, Tuple[str, ...], str]]]:
    """Move through ``configs`` (base, arm) samples; stop at the first new contact.

    Returns the fraction of samples completed and the raw events. ``state`` is
    left at the last contact-free sample.
    """
    start_solid, start_doors = _contacts(state)
    n = len(configs)
    events: List[Tuple[EventKind, Tuple[str, ...], str]] = []
    prev = (state.base, state.arm)
    for k, (base, arm) in enumerate(configs, start=1):
        state.base, state.arm = base, arm
        _sync_held(state)
        solid, doors = _contacts(state)
        new_doors = sorted(doors - start_doors)
        new_solid = sorted(solid - start_solid)
        if new_doors:
            for oid in new_doors:
                f = state.joints[oid]
                state.joints[oid] = max(0.0, f - DOOR_DELTA)
                events.append((EventKind.Collision, (oid,), "robot entered the swing volume of an open door"))
                events.append((EventKind.DoorDisturbed, (oid,),
                               f"joint fraction {f:.2f} -> {state.joints[oid]:.2f}"))
        if new_solid:
            ctx = state.context
            silent = downward and ctx is not None and all(
                part == "held" and oid in ctx.supports for part, oid, _ in new_solid)
            if not silent:
                hit = sorted({oid for _, oid, _ in new_solid})
                events.append((EventKind.Collision, tuple(hit), "contact with " + ", ".join(hit)))
        if new_doors or new_solid:
            state.base, state.arm = prev
            _sync_held(state)
            return (k - 1) / n, events
        prev = (base, arm)
    return 1.0, events


def _clamp_arm(state: WorldState, fwd: float, lat: float, z: float) -> Tuple[float, float, float]:
    r = state.robot.eef_reach
    d = math.hypot(fwd, lat)
    if d > r:
        fwd, lat = fwd * r / d, lat * r / d
    zlo, zhi = state.robot.eef_z_limits
    return fwd, lat, min(zhi, max(zlo, z))


# ---------------------------------------------------------------- primitives

def _grasp_point(state: WorldState, oid: str) -> Tuple[float, float, float]:
    spec = state.specs[oid]
    if spec.articulation is not None:
        if spec.articulation.handle is not None:
            return spec.articulation.handle
        b = state.box(oid)
        fx, fy = spec.front
        c = state.centers[oid]
        return (c[0] + fx * (b[3] - b[0]) / 2, c[1] + fy * (b[4] - b[1]) / 2, c[2])
    return state.centers[oid]


def _arm_toward(state: WorldState, point: Sequence[float], back: float) -> Tuple[float, float, float]:
    """Unclamped arm offsets placing the wrist ``back`` metres before ``point`` along the heading."""
    c, s = state.heading_vec
    dx, dy = point[0] - c * back - state.base[0], point[1] - s * back - state.base[1]
    return dx * c + dy * s, -dx * s + dy * c, point[2]


def _supported_by(state: WorldState, oid: str) -> bool:
    """True when some other object rests on or inside ``oid``."""
    for other in state.specs:
        if other == oid or other == state.held_object:
            continue
        if _raw_truth(state, Predicate(ONTOP, (other, oid))) or _raw_truth(state, Predicate(INSIDE, (other, oid))):
            return True
    return False


def _nav_faces(state: WorldState, oid: str):
    spec = state.specs[oid]
    b = state.box(oid)
    c = state.centers[oid]
    if spec.articulation is not None:
        axis, sign = dominant_axis(*spec.front)
        faces = [(axis, sign)]
    else:
        faces = [(0, -1), (0, 1), (1, -1), (1, 1)]
    out = []
    for axis, sign in faces:
        fc = list(c[:2])
        fc[axis] = b[3 + axis] if sign > 0 else b[axis]
        dist = math.hypot(fc[0] - state.base[0], fc[1] - state.base[1])
        out.append((dist, axis, sign, tuple(fc)))
    out.sort(key=lambda t: t[0])
    return out


def _base_clear(state: WorldState, x: float, y: float, heading: float) -> bool:
    rb = state.robot
    hx, hy = rb.base_footprint[0] / 2, rb.base_footprint[1] / 2
    if not rect_in_bounds(x, y, hx, hy, heading, *state.scene.floor_extent):
        return False
    for oid in state.specs:
        for b in _blockers(state, oid, "base"):
            if rect_overlaps_box(x, y, hx, hy, heading, 0.0, rb.base_height, b):
                return False
    for _, b in _door_boxes(state):
        if rect_overlaps_box(x, y, hx, hy, heading, 0.0, rb.base_height, b):
            return False
    return True


def _navigate(state: WorldState, oid: str, emit) -> float:
    rb = state.robot
    state.arm = (rb.carry_forward, 0.0, rb.carry_height)
    _sync_held(state)
    half = rb.base_footprint[0] / 2
    steps = int(round(NAV_PUSHBACK_LIMIT / STEP_M))
    for _, axis, sign, fc in _nav_faces(state, oid):
        n = [0.0, 0.0]
        n[axis] = float(sign)
        heading = math.atan2(-n[1], -n[0])
        for k in range(steps + 1):
            d = rb.standoff + half + k * STEP_M
            x, y = fc[0] + n[0] * d, fc[1] + n[1] * d
            if _base_clear(state, x, y, heading):
                state.base = (x, y, heading)
                _sync_held(state)
                emit(EventKind.NavArrived, (oid,), f"standoff {d - half:.2f} m")
                return 1.0
    return 0.0


def _settle(state: WorldState, oid: str, emit) -> None:
    b = state.box(oid)
    cx, cy = state.centers[oid][0], state.centers[oid][1]
    bottom = b[2]
    best_z, best_on = 0.0, None
    for other, spec in state.specs.items():
        if other == oid:
            continue
        ob = state.box(other)
        cand = None
        if spec.articulation is not None and state.is_open(other):
            inner = shrink(ob, WALL)
            if contains((inner[0], inner[1], -math.inf, inner[3], inner[4], math.inf), b) and bottom < ob[5]:
                cand = ob[2] + WALL
        elif spec.is_container and point_in_rect(cx, cy, ob, 0.0):
            cand = ob[2] + CONTAINER_FLOOR if bottom >= ob[2] + CONTAINER_FLOOR - 1e-9 else None
        if cand is None and point_in_rect(cx, cy, ob, 0.0) and ob[5] <= bottom + 1e-9:
            cand = ob[5]
        if cand is not None and cand <= bottom + 1e-9 and cand > best_z + 1e-12:
            best_z, best_on = cand, other
    fall = bottom - best_z
    c = state.centers[oid]
    state.centers[oid] = (c[0], c[1], best_z + state.extents[oid][2] / 2)
    if fall > DROP_EVENT_HEIGHT:
        emit(EventKind.ObjectDropped, (oid,) + ((best_on,) if best_on else ()), f"fell {fall:.2f} m")
    ctx = state.context
    if best_on is not None and (ctx is None or best_on not in ctx.ids):
        emit(EventKind.Collision, (oid, best_on), f"{oid} landed on {best_on}")


@dataclass(frozen=True)
class StepResult:
    state: WorldState
    events: Tuple[ExecutionEvent, ...]
    achieved: float
    duration: int


def _require(ctx: Optional[TaskContext], kind: PrimitiveKind, attr: str) -> str:
    oid = getattr(ctx, attr, None) if ctx is not None else None
    if not oid:
        raise MissingContext(f"{kind.name} needs a task context with {attr}")
    return oid


def step_primitive(state: WorldState, a: PrimitiveAction, ctx: TaskContext | None = None) -> StepResult:
    """Execute one primitive on a copy of ``state``; return the new state and details."""
    validate_param(a.kind, a.param)
    s = state.copy()
    if ctx is not None:
        _check_ids(s, ctx.ids)
        s.context = ctx
    ctx = s.context
    kind = a.kind
    dur = duration_ticks(kind)
    s.tick += dur
    events: List[ExecutionEvent] = []

    def emit(k: EventKind, subjects: Tuple[str, ...], detail: str = "") -> None:
        events.append(ExecutionEvent(s.tick, k, tuple(subjects), detail))

    achieved = 1.0
    rb = s.robot
    if kind in (K.NAVIGATE_TO_TARGET, K.NAVIGATE_TO_SUPPORT):
        oid = _require(ctx, kind, "target" if kind is K.NAVIGATE_TO_TARGET else "support_goal")
        achieved = _navigate(s, oid, emit)
    elif kind in (K.APPROACH, K.CONVERGE):
        oid = _require(ctx, kind, "target")
        back = rb.approach_offset if kind is K.APPROACH else rb.converge_offset
        raw = _arm_toward(s, _grasp_point(s, oid), back)
        arm = _clamp_arm(s, *raw)
        s.arm = arm
        _sync_held(s)
        if math.dist(raw, arm) > 1e-9:
            miss = math.dist(raw, arm)
            achieved = max(0.0, 1.0 - miss / max(miss, math.hypot(raw[0], raw[1])))
    elif kind is K.RETREAT:
        _require(ctx, kind, "target")
        s.arm = (rb.carry_forward, 0.0, rb.carry_height)
        _sync_held(s)
    elif kind is K.GRASP:
        oid = _require(ctx, kind, "target")
        achieved = _grasp(s, oid, emit)
    elif kind is K.UNGRASP:
        _require(ctx, kind, "target")
        s.gripper = Gripper.Open
        s.grasped_handle = None
        if s.held_object is not None:
            held = s.held_object
            s.held_object = None
            s.held_offset = (0.0, 0.0, 0.0)
            _settle(s, held, emit)
    elif kind in ARTICULATIONS:
        achieved = _articulate(s, a, ctx, emit)
    elif kind in BASE_MOVES or kind in EEF_MOVES or kind in TURNS:
        achieved = _move(s, a, emit)
    else:  # pragma: no cover - every kind is handled above
        raise InvalidParam(f"unhandled primitive {kind}")
    s.events.extend(events)
    return StepResult(s, tuple(events), achieved, dur)


def _grasp(s: WorldState, oid: str, emit) -> float:
    rb = s.robot
    spec = s.specs[oid]
    g = s.grip
    s.gripper = Gripper.Closed
    if s.held_object == oid:
        return 1.0
    if s.held_object is not None or s.grasped_handle is not None:
        emit(EventKind.GraspEmpty, (oid,), "gripper already occupied")
        return 0.0
    if spec.object_class is ObjectClass.FixtureA:
        if spec.articulation is not None and math.dist(g, _grasp_point(s, oid)) <= rb.grasp_tolerance:
            s.grasped_handle = oid
            return 1.0
        emit(EventKind.GraspEmpty, (oid,), "handle not within reach of the fingers")
        return 0.0
    c = s.centers[oid]
    ext = s.extents[oid]
    near = math.hypot(g[0] - c[0], g[1] - c[1]) <= rb.grasp_tolerance and abs(g[2] - c[2]) <= ext[2] / 2 + rb.grasp_tolerance
    if not near:
        emit(EventKind.GraspEmpty, (oid,), "fingers closed on air")
        return 0.0
    if min(ext[0], ext[1]) > rb.gripper_max_width + 1e-9:
        emit(EventKind.GraspEmpty, (oid,), "object wider than the gripper")
        return 0.0
    if spec.welded or _supported_by(s, oid):
        emit(EventKind.GraspEmpty, (oid,), "object did not move with the gripper")
        return 0.0
    c0, s0 = s.heading_vec
    dx, dy, dz = c[0] - g[0], c[1] - g[1], c[2] - g[2]
    s.held_object = oid
    s.held_offset = (dx * c0 + dy * s0, -dx * s0 + dy * c0, dz)
    return 1.0


def _articulate(s: WorldState, a: PrimitiveAction, ctx: Optional[TaskContext], emit) -> float:
    oid = _require(ctx, a.kind, "target")
    art = s.specs[oid].articulation
    if art is None or s.grasped_handle != oid:
        return 0.0
    lo, hi = a.range
    jlo, jhi = art.limits
    cur = s.joints[oid]
    if a.kind is K.ARTICULATE_OPEN:
        goal = min(jhi, max(jlo, hi))
        new = goal
    else:
        goal = min(jhi, max(jlo, lo))
        if hi < art.open_threshold + CLOSE_MARGIN:
            new = max(goal, min(cur, 1.0 - (hi - lo)))
        else:
            new = goal
    new = min(1.0, max(0.0, new))
    if new != cur:
        s.joints[oid] = new
        emit(EventKind.JointMoved, (oid,), f"joint fraction {cur:.2f} -> {new:.2f}")
    if cur == goal:
        return 1.0
    return max(0.0, min(1.0, (new - cur) / (goal - cur)))


def _move(s: WorldState, a: PrimitiveAction, emit) -> float:
    kind = a.kind
    amount = float(a.param)
    if amount == 0:
        return 1.0
    x, y, th = s.base
    fwd, lat, z = s.arm
    configs = []
    if kind in TURNS:
        sign = 1.0 if kind is K.TURN_BASE_LEFT else -1.0
        n = max(1, math.ceil(amount / STEP_DEG - 1e-9))
        for k in range(1, n + 1):
            configs.append(((x, y, th + sign * math.radians(amount * k / n)), s.arm))
        commanded = 1.0
        downward = False
    elif kind in BASE_MOVES:
        c, sn = s.heading_vec
        uf, ul = {K.MOVE_BASE_FORWARD: (1, 0), K.MOVE_BASE_BACKWARD: (-1, 0),
                  K.MOVE_BASE_LEFT: (0, 1), K.MOVE_BASE_RIGHT: (0, -1)}[kind]
        dx, dy = c * uf - sn * ul, sn * uf + c * ul
        n = max(1, math.ceil(amount / STEP_M - 1e-9))
        for k in range(1, n + 1):
            t = amount * k / n
            configs.append(((x + dx * t, y + dy * t, th), s.arm))
        commanded = 1.0
        downward = False
    else:
        df, dl, dz = {K.MOVE_EEF_FORWARD: (1, 0, 0), K.MOVE_EEF_BACKWARD: (-1, 0, 0),
                      K.MOVE_EEF_LEFT: (0, 1, 0), K.MOVE_EEF_RIGHT: (0, -1, 0),
                      K.LIFT_EEF_UP: (0, 0, 1), K.LIFT_EEF_DOWN: (0, 0, -1)}[kind]
        target = _clamp_arm(s, fwd + df * amount, lat + dl * amount, z + dz * amount)
        reach = math.dist(target, s.arm)
        commanded = reach / amount
        n = max(1, math.ceil(reach / STEP_M - 1e-9))
        for k in range(1, n + 1):
            t = k / n
            configs.append((s.base, (fwd + (target[0] - fwd) * t, lat + (target[1] - lat) * t,
                                     z + (target[2] - z) * t)))
        downward = dz < 0
        if reach == 0:
            return 0.0
    done, raw = _sweep(s, configs, downward)
    for k, subj, detail in raw:
        emit(k, subj, detail)
    return done * commanded


def execute_primitive(state: WorldState, a: PrimitiveAction, ctx: TaskContext | None = None):
    """Apply one primitive; returns ``(new_state, events)``."""
    r = step_primitive(state, a, ctx)
    return r.state, list(r.events)


# ---------------------------------------------------------------- flows and traces

@dataclass(frozen=True)
class TraceStep:
    action: PrimitiveAction
    post_state: WorldState
    events: Tuple[ExecutionEvent, ...]
    duration_ticks: int
    achieved: float
    changed_pairs: frozenset


@dataclass(frozen=True)
class ExecutionTrace:
    initial_state: WorldState
    steps: Tuple[TraceStep, ...]
    success: bool
    changed_pairs: frozenset
    task: Optional[SimpleTask] = None
    delta_release: Optional[int] = None
    delta_goal: Optional[int] = None
    truncated: bool = False

    @property
    def final_state(self) -> WorldState:
        return self.steps[-1].post_state if self.steps else self.initial_state

    @property
    def flow(self) -> ActionFlow:
        return tuple(s.action for s in self.steps)

    def events(self) -> List[ExecutionEvent]:
        return [e for s in self.steps for e in s.events]

    def has_collision(self) -> bool:
        return any(e.kind in (EventKind.Collision, EventKind.DoorDisturbed) for e in self.events())


def _holds(state: WorldState, preds: Sequence[Predicate]) -> bool:
    return all(evaluate_predicate(state, p) for p in preds)


def execute_flow(state: WorldState, flow: ActionFlow, task: SimpleTask) -> ExecutionTrace:
    """Run every action in order (soft failures never abort) and score the goal."""
    if not flow:
        raise InvalidParam("flow must be non-empty")
    ctx = TaskContext.of(task)
    _check_ids(state, ctx.ids)
    start = state.copy()
    start.context = ctx
    before = snapshot_predicates(start)
    init_held = _holds(start, task.init)
    goal_held = evaluate_goal(start, task.goal)
    d_release = None if init_held else start.tick
    d_goal = start.tick if goal_held else None
    cur = start
    steps = []
    union: set = set()
    for a in flow:
        r = step_primitive(cur, a, ctx)
        after = snapshot_predicates(r.state)
        cp = changed_pairs(before, after)
        union |= cp
        steps.append(TraceStep(a, r.state, r.events, r.duration, r.achieved, cp))
        if d_release is None and not _holds(r.state, task.init):
            d_release = r.state.tick
        if d_goal is None and evaluate_goal(r.state, task.goal):
            d_goal = r.state.tick
        before = after
        cur = r.state
    success = evaluate_goal(cur, task.goal)
    return ExecutionTrace(start, tuple(steps), success, frozenset(union), task, d_release, d_goal)


def apply_transfer(state: WorldState, e: ActionTransfer, next_context: TaskContext | None = None) -> WorldState:
    """Context switch between subtasks: one tick passes and nothing physical changes."""
    for oid in (e.prev_target, e.next_target):
        if oid not in state.specs:
            raise UnknownObject(f"transfer references unknown object {oid!r}")
    if next_context is not None:
        _check_ids(state, next_context.ids)
        if next_context.target != e.next_target:
            raise InvalidParam("next context target must match the transfer's next target")
    s = state.copy()
    s.tick += 1
    s.context = next_context or TaskContext(e.next_target)
    s.events.append(ExecutionEvent(s.tick, EventKind.Transfer, (e.prev_target, e.next_target),
                                   f"context {e.prev_target} -> {e.next_target}"))
    return s


def trace_to_jsonl(trace: ExecutionTrace, scene_id: str, task_id: str) -> str:
    from .codec import encode_action

    lines = [json.dumps({"scene_id": scene_id, "task": task_id, "success": trace.success,
                         "steps": len(trace.steps)}, sort_keys=True)]
    for st in trace.steps:
        lines.append(json.dumps({
            "tick": st.post_state.tick,
            "action": encode_action(st.action),
            "events": [e.to_json() for e in st.events],
            "predicates_changed": sorted(list(p) for p in st.changed_pairs),
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def frame_invariance_holds(trace: ExecutionTrace) -> bool:
    """Changed pairs stay within the task tuple unless a collision was recorded."""
    if trace.task is None:
        raise InvalidParam("trace has no task")
    if trace.has_collision():
        return True
    allowed = set(trace.task.context_ids) | {GRIPPER, ROBOT}
    return all(set(pair) <= allowed for pair in trace.changed_pairs)


__all__ = [
    "EventKind", "ExecutionEvent", "ExecutionTrace", "Gripper", "TaskContext", "TraceStep", "WorldState",
    "apply_transfer", "changed_pairs", "duration_ticks", "evaluate_goal", "evaluate_predicate",
    "execute_flow", "execute_primitive", "frame_invariance_holds", "initial_state",
    "snapshot_predicates", "step_primitive", "trace_to_jsonl", "make",
]
