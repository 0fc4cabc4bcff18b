"""Scene files: loading, validation, object classes and graspability scaling."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple

from .errors import ParseError, UnknownCategory, ValidationError
from .geometry import Box, box_from_center, world_extents

FIXTURE_CATEGORIES = frozenset({
    "refrigerator", "cabinet", "microwave", "oven", "drawer", "dishwasher", "table",
    "countertop", "shelf", "sink",
})
ITEM_CATEGORIES = frozenset({
    "cup", "glass", "apple", "bottle", "box", "bowl", "knife", "plate", "mug",
    "banana", "orange", "can", "spoon", "fork", "book", "basket", "pot",
})
# items that can hold other items (their whole bbox counts as interior)
CONTAINER_CATEGORIES = frozenset({"bowl", "box", "basket", "pot", "mug", "cup"})

SYNONYMS = {
    "fridge": "refrigerator",
    "icebox": "refrigerator",
    "cupboard": "cabinet",
    "desk": "table",
    "tumbler": "glass",
}


class ObjectClass(Enum):
    FixtureA = "A"
    ManipulableB = "B"


class JointKind(Enum):
    Revolute = "revolute"
    Prismatic = "prismatic"


def base_category(category: str) -> str:
    """Lowercase, drop a WordNet-style ``.n.01`` suffix, and apply synonyms."""
    c = re.sub(r"\.n\.\d+$", "", category.strip().lower())
    return SYNONYMS.get(c, c)


@dataclass(frozen=True)
class ArticulationSpec:
    joint_kind: JointKind
    joint_fraction: float
    swept_volume: Box
    open_threshold: float
    handle: Optional[Tuple[float, float, float]] = None
    range: Optional[Tuple[float, float]] = None  # physical joint limits, default [0, 1]

    @property
    def limits(self) -> Tuple[float, float]:
        return self.range if self.range is not None else (0.0, 1.0)


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    category: str
    object_class: ObjectClass
    bbox_extents: Tuple[float, float, float]
    position: Tuple[float, float, float]
    yaw: float = 0.0
    room: str = ""
    articulation: Optional[ArticulationSpec] = None
    declared_class: Optional[ObjectClass] = None
    welded: bool = False

    @property
    def base_category(self) -> str:
        return base_category(self.category)

    @property
    def world_extents(self) -> Tuple[float, float, float]:
        return world_extents(self.bbox_extents, self.yaw)

    @property
    def box(self) -> Box:
        return box_from_center(self.position, self.world_extents)

    @property
    def front(self) -> Tuple[float, float]:
        return (math.cos(self.yaw), math.sin(self.yaw))

    @property
    def is_container(self) -> bool:
        return self.object_class is ObjectClass.ManipulableB and self.base_category in CONTAINER_CATEGORIES


@dataclass(frozen=True)
class RobotStart:
    base: Tuple[float, float]
    heading: float = 0.0


@dataclass(frozen=True)
class SceneConfig:
    scene_id: str
    objects: Tuple[ObjectSpec, ...]
    rooms: Tuple[str, ...] = ()
    floor_extent: Tuple[float, float] = (5.0, 5.0)
    robot: Optional[RobotStart] = None
    room_regions: Tuple[Tuple[str, Box], ...] = ()

    def get(self, oid: str) -> ObjectSpec:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(o.id for o in self.objects)

    def by_category(self, category: str) -> Tuple[ObjectSpec, ...]:
        c = base_category(category)
        return tuple(o for o in self.objects if o.base_category == c)


@dataclass(frozen=True)
class RobotConfig:
    """Robot geometry and controller constants.

    Only ``scale``, the gripper widths and the 0.14 offset factor come from
    published values; the rest are tuning choices for the micro-sim.
    """

    scale: float = 0.7
    gripper_max_width: float = 0.06
    ideal_grasp_width: float = 0.05
    base_footprint: Tuple[float, float] = (0.3, 0.3)
    base_height: float = 0.5
    eef_reach: float = 0.85
    eef_z_limits: Tuple[float, float] = (0.05, 1.6)
    carry_forward: float = 0.19
    carry_height: float = 0.9
    approach_offset: float = 0.25
    grasp_tolerance: float = 0.06
    standoff_factor: float = 0.8
    probe_size: float = 0.02

    def __post_init__(self):
        if not 0 < self.ideal_grasp_width < self.gripper_max_width:
            raise ValueError("need 0 < ideal_grasp_width < gripper_max_width")

    @property
    def converge_offset(self) -> float:
        return 0.14 * self.scale

    @property
    def standoff(self) -> float:
        return self.standoff_factor * self.scale


def classify_object(spec: ObjectSpec | Mapping[str, Any]) -> ObjectClass:
    """Fixture vs manipulable; an explicit annotation beats the category lists."""
    if isinstance(spec, ObjectSpec):
        declared, category = spec.declared_class, spec.category
    else:
        declared = _parse_class(spec.get("class"), "class")
        category = spec.get("category", "")
    if declared is not None:
        return declared
    c = base_category(category)
    if c in FIXTURE_CATEGORIES:
        return ObjectClass.FixtureA
    if c in ITEM_CATEGORIES:
        return ObjectClass.ManipulableB
    raise UnknownCategory(f"category {category!r} is neither a fixture nor an item")


def adjust_object_scale(spec: ObjectSpec, robot: RobotConfig | None = None, mode: str = "decimal") -> float:
    """Uniform scale factor that makes a manipulable graspable.

    ``mode="decimal"`` rounds ``ideal / d_min`` to two decimals; ``"grid"``
    snaps it to the 0.05 grid instead.
    """
    robot = robot or RobotConfig()
    if spec.object_class is ObjectClass.FixtureA:
        return 1.0
    d_min = min(spec.bbox_extents[0], spec.bbox_extents[1])
    if d_min <= robot.gripper_max_width:
        return 1.0
    raw = robot.ideal_grasp_width / d_min
    if mode == "decimal":
        s = round(raw, 2)
        step = 0.01
    elif mode == "grid":
        s = round(round(raw / 0.05) * 0.05, 2)
        step = 0.05
    else:
        raise ValueError(f"unknown rounding mode {mode!r}")
    return min(1.0, max(step, s))


def scale_spec(spec: ObjectSpec, factor: float) -> ObjectSpec:
    """Uniformly scale an object about its footprint centre, keeping its bottom z."""
    if factor == 1.0:
        return spec
    ext = tuple(e * factor for e in spec.bbox_extents)
    bottom = spec.position[2] - spec.bbox_extents[2] / 2
    pos = (spec.position[0], spec.position[1], bottom + ext[2] / 2)
    return replace(spec, bbox_extents=ext, position=pos)


def apply_scales(scene: SceneConfig, scales: Mapping[str, float]) -> SceneConfig:
    objs = tuple(scale_spec(o, scales.get(o.id, 1.0)) for o in scene.objects)
    return replace(scene, objects=objs)


# ---------------------------------------------------------------- parsing

def _parse_class(raw, path: str) -> Optional[ObjectClass]:
    if raw is None:
        return None
    if raw in ("A", "B"):
        return ObjectClass(raw)
    raise ValidationError(f"class must be 'A', 'B' or null, got {raw!r}", path)


def _vec(raw, n: int, path: str) -> Tuple[float, ...]:
    if not isinstance(raw, (list, tuple)) or len(raw) != n:
        raise ValidationError(f"expected a list of {n} numbers", path)
    out = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError(f"not a finite number: {v!r}", f"{path}[{i}]")
        out.append(float(v))
    return tuple(out)


def _num(raw, path: str) -> float:
    return _vec([raw], 1, path)[0]


def _articulation(raw: Mapping[str, Any], path: str) -> ArticulationSpec:
    if not isinstance(raw, Mapping):
        raise ValidationError("articulation must be an object or null", path)
    try:
        kind = JointKind(raw.get("kind"))
    except ValueError:
        raise ValidationError(f"unknown joint kind {raw.get('kind')!r}", f"{path}.kind") from None
    frac = _num(raw.get("fraction"), f"{path}.fraction")
    if not 0.0 <= frac <= 1.0:
        raise ValidationError("fraction must lie in [0, 1]", f"{path}.fraction")
    sb = raw.get("swept_box")
    if not isinstance(sb, list) or len(sb) != 2:
        raise ValidationError("swept_box must be [[x0,y0,z0],[x1,y1,z1]]", f"{path}.swept_box")
    lo, hi = _vec(sb[0], 3, f"{path}.swept_box[0]"), _vec(sb[1], 3, f"{path}.swept_box[1]")
    if any(h <= l for l, h in zip(lo, hi)):
        raise ValidationError("swept_box corners must be ordered min, max", f"{path}.swept_box")
    thr = _num(raw.get("open_threshold"), f"{path}.open_threshold")
    if not 0.0 < thr < 1.0:
        raise ValidationError("open_threshold must lie in (0, 1)", f"{path}.open_threshold")
    handle = raw.get("handle")
    handle_t = _vec(handle, 3, f"{path}.handle") if handle is not None else None
    rng = raw.get("range")
    rng_t = None
    if rng is not None:
        rng_t = _vec(rng, 2, f"{path}.range")
        if not 0.0 <= rng_t[0] <= rng_t[1] <= 1.0:
            raise ValidationError("range must satisfy 0 <= min <= max <= 1", f"{path}.range")
    return ArticulationSpec(kind, frac, lo + hi, thr, handle_t, rng_t)


def parse_scene(doc: Mapping[str, Any]) -> SceneConfig:
    """Validate a decoded scene document and build a :class:`SceneConfig`."""
    if not isinstance(doc, Mapping):
        raise ValidationError("scene document must be a JSON object")
    sid = doc.get("scene_id")
    if not isinstance(sid, str) or not sid:
        raise ValidationError("scene_id must be a non-empty string", "scene_id")
    floor = _vec(doc.get("floor_extent"), 2, "floor_extent")
    if floor[0] <= 0 or floor[1] <= 0:
        raise ValidationError("floor_extent must be positive", "floor_extent")
    rooms_raw = doc.get("rooms", [])
    if not isinstance(rooms_raw, list) or not all(isinstance(r, str) for r in rooms_raw):
        raise ValidationError("rooms must be a list of strings", "rooms")
    rooms = tuple(r.lower() for r in rooms_raw)
    objs_raw = doc.get("objects")
    if not isinstance(objs_raw, list):
        raise ValidationError("objects must be a list", "objects")
    if not objs_raw:
        raise ValidationError("empty scene: at least one object is required", "objects")

    objects, seen = [], set()
    for i, raw in enumerate(objs_raw):
        p = f"objects[{i}]"
        if not isinstance(raw, Mapping):
            raise ValidationError("object must be a JSON object", p)
        oid = raw.get("id")
        if not isinstance(oid, str) or not oid:
            raise ValidationError("id must be a non-empty string", f"{p}.id")
        oid = oid.lower()
        if oid in seen:
            raise ValidationError(f"duplicate id {oid!r}", f"{p}.id")
        if oid in ("gripper", "robot"):
            raise ValidationError(f"id {oid!r} is reserved", f"{p}.id")
        seen.add(oid)
        category = raw.get("category")
        if not isinstance(category, str) or not category:
            raise ValidationError("category must be a non-empty string", f"{p}.category")
        declared = _parse_class(raw.get("class"), f"{p}.class")
        cls = classify_object({"class": raw.get("class"), "category": category})
        bbox = _vec(raw.get("bbox"), 3, f"{p}.bbox")
        if any(e <= 0 for e in bbox):
            raise ValidationError("bbox extents must be strictly positive", f"{p}.bbox")
        pos = _vec(raw.get("pos"), 3, f"{p}.pos")
        yaw = _num(raw.get("yaw", 0.0), f"{p}.yaw")
        room = raw.get("room", rooms[0] if rooms else "")
        if not isinstance(room, str):
            raise ValidationError("room must be a string", f"{p}.room")
        room = room.lower()
        if rooms and room not in rooms:
            raise ValidationError(f"room {room!r} not declared in rooms", f"{p}.room")
        art_raw = raw.get("articulation")
        art = None
        if art_raw is not None:
            if cls is not ObjectClass.FixtureA:
                raise ValidationError("articulation is only allowed on FixtureA objects", f"{p}.articulation")
            art = _articulation(art_raw, f"{p}.articulation")
        welded = raw.get("welded", False)
        if not isinstance(welded, bool):
            raise ValidationError("welded must be a boolean", f"{p}.welded")
        spec = ObjectSpec(oid, category.lower(), cls, bbox, pos, yaw, room, art, declared, welded)
        b = spec.box
        if b[0] < -1e-9 or b[1] < -1e-9 or b[3] > floor[0] + 1e-9 or b[4] > floor[1] + 1e-9:
            raise ValidationError("bounding box leaves floor_extent", f"{p}.pos")
        objects.append(spec)

    robot = None
    if doc.get("robot") is not None:
        r = doc["robot"]
        if not isinstance(r, Mapping):
            raise ValidationError("robot must be an object", "robot")
        robot = RobotStart(_vec(r.get("base"), 2, "robot.base"), _num(r.get("heading", 0.0), "robot.heading"))
    regions = []
    for name, rect in (doc.get("room_regions") or {}).items():
        p = f"room_regions.{name}"
        if not isinstance(rect, list) or len(rect) != 2:
            raise ValidationError("room region must be [[x0,y0],[x1,y1]]", p)
        lo, hi = _vec(rect[0], 2, p), _vec(rect[1], 2, p)
        regions.append((name.lower(), (lo[0], lo[1], -math.inf, hi[0], hi[1], math.inf)))
    return SceneConfig(sid, tuple(objects), rooms, floor, robot, tuple(regions))


def load_scene(path: str | Path) -> SceneConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read scene file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_scene(doc)


def serialize_scene(scene: SceneConfig) -> dict:
    """Inverse of :func:`parse_scene` (``parse_scene(serialize_scene(s)) == s``)."""
    objs = []
    for o in scene.objects:
        d: dict = {
            "id": o.id,
            "category": o.category,
            "class": o.declared_class.value if o.declared_class else None,
            "bbox": list(o.bbox_extents),
            "pos": list(o.position),
            "yaw": o.yaw,
            "room": o.room,
            "articulation": None,
        }
        if o.articulation is not None:
            a = o.articulation
            d["articulation"] = {
                "kind": a.joint_kind.value,
                "fraction": a.joint_fraction,
                "swept_box": [list(a.swept_volume[:3]), list(a.swept_volume[3:])],
                "open_threshold": a.open_threshold,
            }
            if a.handle is not None:
                d["articulation"]["handle"] = list(a.handle)
            if a.range is not None:
                d["articulation"]["range"] = list(a.range)
        if o.welded:
            d["welded"] = True
        objs.append(d)
    doc: dict = {
        "scene_id": scene.scene_id,
        "floor_extent": list(scene.floor_extent),
        "rooms": list(scene.rooms),
        "objects": objs,
    }
    if scene.robot is not None:
        doc["robot"] = {"base": list(scene.robot.base), "heading": scene.robot.heading}
    if scene.room_regions:
        doc["room_regions"] = {n: [[b[0], b[1]], [b[3], b[4]]] for n, b in scene.room_regions}
    return doc


def save_scene(scene: SceneConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(serialize_scene(scene), indent=2) + "\n", encoding="utf-8")


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def bundled_scene_path(name: str) -> Path:
    return data_dir() / "scenes" / f"{name}.json"


__all__ = [
    "ArticulationSpec", "ObjectClass", "ObjectSpec", "JointKind", "RobotConfig", "RobotStart",
    "SceneConfig", "adjust_object_scale", "apply_scales", "classify_object", "load_scene",
    "parse_scene", "serialize_scene", "save_scene", "bundled_scene_path", "base_category",
    "CONTAINER_CATEGORIES", "FIXTURE_CATEGORIES", "ITEM_CATEGORIES",
]
