"""Three-stage task generation: expansion, decomposition and instantiation.

Planners answer two kinds of request (``Expand`` and ``Decompose``). The
:class:`TemplatePlanner` is a deterministic keyword matcher; the
:class:`RemotePlanner` forwards the same requests to an HTTP endpoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Protocol, Tuple

from .bddl import emit_bddl
from .errors import (
    InvalidDecomposition, NoTemplate, PlannerUnavailable, TaskWorldError, UnresolvedObject,
)
from .predicates import INSIDE, ONTOP, OPEN, InGripper, Inside, OnTop, Open, Predicate
from .primitives import ActionFlow, act
from .remote import JsonClient, RemoteConfig, RemoteError, endpoint_from_env
from .scene import ObjectClass, RobotConfig, SceneConfig, adjust_object_scale, base_category
from .tasks import ComplexTask, SimpleTask, derive_transfers
from .world import evaluate_goal, initial_state, snapshot_predicates

# keyword nouns that may name a different but interchangeable category
ALIASES = {"cup": ("glass", "mug"), "glass": ("cup",), "mug": ("cup", "glass")}
CLOSE_DEFAULT_RANGE = (0.0, 0.5)
PICK_LIFT = 0.2
PLACE_BASE_ADVANCE = 0.4
PLACE_EEF_ADVANCE = 0.1
PLACE_LOWER = 0.3


class Stage(Enum):
    Expand = "expand"
    Decompose = "decompose"


@dataclass(frozen=True)
class TaskKeyword:
    text: str
    scene_id: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("keyword text must be non-empty")


@dataclass(frozen=True)
class PlannerRequest:
    stage: Stage
    keyword: str
    scene: Mapping[str, Any]
    prior: Optional[Mapping[str, Any]] = None

    def to_json(self) -> dict:
        return {"stage": self.stage.value, "keyword": self.keyword, "scene": dict(self.scene),
                "prior": dict(self.prior) if self.prior is not None else None}


class Planner(Protocol):
    def request(self, req: PlannerRequest) -> Mapping[str, Any]: ...


def summarize_scene(scene: SceneConfig) -> dict:
    """What a planner sees: ids, categories, classes, positions and resting supports."""
    state = initial_state(scene)
    snap = snapshot_predicates(state)
    rest: Dict[str, Tuple[str, str]] = {}
    for p, v in snap.items():
        if v and p.name in (ONTOP, INSIDE) and p.args[0] not in rest:
            rest[p.args[0]] = (p.name, p.args[1])
    objs = []
    for o in scene.objects:
        d = {"id": o.id, "category": o.base_category, "class": o.object_class.value,
             "position": list(o.position)}
        if o.id in rest:
            d["relation"], d["support"] = rest[o.id]
        if o.articulation is not None:
            d["open"] = state.is_open(o.id)
            d["articulation_range"] = list(o.articulation.range) if o.articulation.range else None
        objs.append(d)
    return {"scene_id": scene.scene_id, "objects": objs}


# ---------------------------------------------------------------- template planner

_ARTICLES = re.compile(r"\b(?:the|a|an|some)\b\s*")
_KEYWORD_PATTERNS = [
    ("pick_place", re.compile(r"^(?:pick up|grab|take)\s+(?P<x>.+?)\s+and\s+(?:put|place|drop)\s+(?:it\s+)?"
                              r"(?P<prep>into|in|inside|onto|on)\s+(?P<y>.+)$")),
    ("place", re.compile(r"^(?:put|place|transport|move|bring)\s+(?P<x>.+?)\s+"
                         r"(?P<prep>into|in|inside|onto|on|on top of)\s+(?P<y>.+)$")),
    ("pick", re.compile(r"^(?:pick up|grab|take)\s+(?P<x>.+)$")),
    ("open", re.compile(r"^open\s+(?P<x>.+)$")),
    ("close", re.compile(r"^close\s+(?P<x>.+)$")),
]
_NAME_PATTERNS = [
    ("open_place_close", re.compile(r"^open_the_(?P<f>.+)_and_put_the_(?P<x>.+)_into_the_(?P=f)$")),
    ("place_inside", re.compile(r"^put_the_(?P<x>.+?)_into_the_(?P<y>.+)$")),
    ("place_inside", re.compile(r"^pick_up_(?P<x>.+?)_and_put_into_(?P<y>.+)$")),
    ("place_ontop", re.compile(r"^put_the_(?P<x>.+?)_on_the_(?P<y>.+)$")),
    ("pick", re.compile(r"^pick_up_(?P<x>.+)$")),
    ("open", re.compile(r"^open_the_(?P<f>.+)$")),
    ("close", re.compile(r"^close_the_(?P<f>.+)$")),
]


def _normalize(text: str) -> str:
    t = text.strip().lower().rstrip(".!")
    t = _ARTICLES.sub("", t)
    return re.sub(r"\s+", " ", t).strip()


def _objects(summary: Mapping[str, Any]) -> List[Mapping[str, Any]]:
    return list(summary.get("objects", []))


def _resolve(summary: Mapping[str, Any], noun: str) -> Optional[Mapping[str, Any]]:
    """First object (by id) whose category matches ``noun`` or one of its aliases."""
    cat = base_category(noun.replace(" ", "_"))
    objs = sorted(_objects(summary), key=lambda o: o["id"])
    for o in objs:
        if o["id"] == noun.replace(" ", "_"):
            return o
    for c in (cat,) + ALIASES.get(cat, ()):
        for o in objs:
            if o["category"] == c:
                return o
    return None


class TemplatePlanner:
    """Deterministic planner keyed on a handful of keyword shapes."""

    def request(self, req: PlannerRequest) -> Mapping[str, Any]:
        if req.stage is Stage.Expand:
            return self._expand(req.keyword, req.scene)
        return self._decompose(req.prior or {}, req.scene)

    def _expand(self, keyword: str, summary: Mapping[str, Any]) -> dict:
        text = _normalize(keyword)
        for shape, pat in _KEYWORD_PATTERNS:
            m = pat.match(text)
            if m:
                break
        else:
            raise NoTemplate(f"no template matches keyword {keyword!r}")
        x = _resolve(summary, m.group("x"))
        if x is None:
            raise UnresolvedObject(f"{m.group('x')!r} does not name an object in the scene")
        xc = x["category"]
        if shape in ("open", "close"):
            if x.get("open") is None:
                raise UnresolvedObject(f"{x['id']} cannot be opened or closed")
            return {"task_activity_name": f"{shape}_the_{xc}",
                    "task_detail_message": f"{shape.capitalize()} {x['id']}."}
        if shape == "pick":
            return {"task_activity_name": f"pick_up_{xc}",
                    "task_detail_message": f"Pick up {x['id']} and hold it."}
        y = _resolve(summary, m.group("y"))
        yc = y["category"] if y is not None else base_category(m.group("y").replace(" ", "_"))
        inside = m.group("prep") in ("into", "in", "inside")
        if not inside:
            return {"task_activity_name": f"put_the_{xc}_on_the_{yc}",
                    "task_detail_message": f"Pick up {x['id']} and place it on top of {yc}."}
        if y is not None and y.get("open") is False:
            return {"task_activity_name": f"open_the_{yc}_and_put_the_{xc}_into_the_{yc}",
                    "task_detail_message": (f"The {yc} is closed. Open it, move {x['id']} inside, "
                                            f"then close the {yc} again.")}
        if y is not None and y.get("open") is True:
            return {"task_activity_name": f"put_the_{xc}_into_the_{yc}",
                    "task_detail_message": f"Move {x['id']} into the open {yc}."}
        return {"task_activity_name": f"pick_up_{xc}_and_put_into_{yc}",
                "task_detail_message": f"Pick up {x['id']} and put it into the {yc}."}

    def _decompose(self, prior: Mapping[str, Any], summary: Mapping[str, Any]) -> dict:
        name = prior.get("task_activity_name", "")
        for shape, pat in _NAME_PATTERNS:
            m = pat.match(name)
            if m:
                break
        else:
            raise NoTemplate(f"cannot decompose {name!r}")
        g = m.groupdict()

        def obj(key: str) -> Optional[Mapping[str, Any]]:
            return _resolve(summary, g[key]) if g.get(key) else None

        def need(key: str) -> Mapping[str, Any]:
            o = obj(key)
            if o is None:
                raise InvalidDecomposition(f"no object in the scene matches {g[key]!r}")
            return o

        def pick(x):
            return {"name": f"pick_up_{x['category']}", "description": f"Pick up {x['id']}.",
                    "target_id": x["id"], "support_init_id": x.get("support"), "support_goal_id": None,
                    "bddl_category": "picking_up", "kind": "pick"}

        def place(x, y, kind):
            word = "into" if kind == "place_inside" else "on"
            return {"name": f"put_{x['category']}_{word}_{y['category']}",
                    "description": f"Put {x['id']} {word} {y['id']}.",
                    "target_id": x["id"], "support_init_id": None, "support_goal_id": y["id"],
                    "bddl_category": "putting_" + word, "kind": kind}

        def art(f, kind):
            return {"name": f"{kind}_{f['category']}", "description": f"{kind.capitalize()} {f['id']}.",
                    "target_id": f["id"], "support_init_id": None, "support_goal_id": None,
                    "bddl_category": kind + "ing", "kind": kind}

        if shape == "open_place_close":
            f, x = need("f"), need("x")
            subs = [art(f, "open"), pick(x), place(x, f, "place_inside"), art(f, "close")]
        elif shape in ("place_inside", "place_ontop"):
            x, y = need("x"), need("y")
            if shape == "place_inside" and y.get("class") == "A" and y.get("open") is None:
                raise InvalidDecomposition(f"{y['id']} has no interior to put things into")
            subs = [pick(x), place(x, y, shape)]
        elif shape == "pick":
            subs = [pick(need("x"))]
        else:
            subs = [art(need("f"), shape)]
        return {"subtasks": subs}


# ---------------------------------------------------------------- remote planner

class RemotePlanner:
    """Planner backed by an HTTP endpoint (``AGT_PLANNER_URL`` / ``AGT_PLANNER_TOKEN``)."""

    def __init__(self, url: str | None = None, token: str | None = None, config: RemoteConfig | None = None,
                 transport=None):
        if url is None:
            try:
                url, token = endpoint_from_env("AGT_PLANNER_URL", "AGT_PLANNER_TOKEN")
            except RemoteError as exc:
                raise PlannerUnavailable(str(exc)) from None
        self.client = JsonClient(url, token, config, transport)

    def request(self, req: PlannerRequest) -> Mapping[str, Any]:
        try:
            resp = self.client.post(req.to_json())
        except RemoteError as exc:
            raise PlannerUnavailable(str(exc)) from None
        if not isinstance(resp, Mapping):
            raise PlannerUnavailable("planner returned a non-object response")
        return resp


# ---------------------------------------------------------------- pipeline

def _tag(exc: TaskWorldError, stage: str) -> TaskWorldError:
    if exc.stage is None:
        exc.stage = stage
    return exc


def expand(keyword: TaskKeyword | str, scene: SceneConfig, planner: Planner) -> Tuple[str, str]:
    kw = keyword if isinstance(keyword, TaskKeyword) else TaskKeyword(keyword, scene.scene_id)
    summary = summarize_scene(scene)
    resp = planner.request(PlannerRequest(Stage.Expand, kw.text, summary))
    name, detail = resp.get("task_activity_name"), resp.get("task_detail_message")
    if not isinstance(name, str) or not name or not isinstance(detail, str) or not detail:
        raise InvalidDecomposition("expansion must return task_activity_name and task_detail_message")
    return name, detail


def _relation(scene: SceneConfig, target: str, support: str) -> str:
    snap = snapshot_predicates(initial_state(scene))
    if snap.get(Predicate(INSIDE, (target, support))):
        return INSIDE
    return ONTOP


def _kind_from_name(name: str) -> str:
    if name.startswith("open_"):
        return "open"
    if name.startswith("close_"):
        return "close"
    if name.startswith("pick_up_"):
        return "pick"
    if "_into_" in name:
        return "place_inside"
    if "_on_" in name:
        return "place_ontop"
    raise InvalidDecomposition(f"cannot infer the subtask kind of {name!r}")


def _subtask(cfg: Mapping[str, Any], scene: SceneConfig, index: int) -> SimpleTask:
    ids = set(scene.ids)
    path = f"subtasks[{index}]"
    target = cfg.get("target_id")
    if not target:
        raise InvalidDecomposition(f"{path}: missing target_id")
    for key in ("target_id", "support_init_id", "support_goal_id"):
        v = cfg.get(key)
        if v is not None and v not in ids:
            raise InvalidDecomposition(f"{path}: {key} {v!r} is not in the scene")
    name = cfg.get("name") or ""
    if not name:
        raise InvalidDecomposition(f"{path}: missing name")
    kind = cfg.get("kind") or _kind_from_name(name)
    s1, s2 = cfg.get("support_init_id"), cfg.get("support_goal_id")
    t = target
    if kind == "open":
        init, goal = (Open(t, True),), (Open(t),)
    elif kind == "close":
        init, goal = (Open(t),), (Open(t, True),)
    elif kind == "pick":
        if not s1:
            raise InvalidDecomposition(f"{path}: a pick needs support_init_id")
        rel = _relation(scene, t, s1)
        p = OnTop(t, s1) if rel == ONTOP else Inside(t, s1)
        init, goal = (p,), (p.negate(),)
    elif kind in ("place_inside", "place_ontop"):
        if not s2:
            raise InvalidDecomposition(f"{path}: a place needs support_goal_id")
        init = (InGripper(t),)
        goal = (Inside(t, s2),) if kind == "place_inside" else (OnTop(t, s2),)
    else:
        raise InvalidDecomposition(f"{path}: unknown subtask kind {kind!r}")
    return SimpleTask(name, cfg.get("description") or name, t, s1, s2, init, goal,
                      cfg.get("bddl_category") or kind, kind)


def decompose(name: str, detail: str, scene: SceneConfig, planner: Planner) -> ComplexTask:
    summary = summarize_scene(scene)
    resp = planner.request(PlannerRequest(Stage.Decompose, name, summary,
                                          {"task_activity_name": name, "task_detail_message": detail}))
    cfgs = resp.get("subtasks")
    if not isinstance(cfgs, list) or not cfgs:
        raise InvalidDecomposition("decomposition returned no subtasks")
    subs = tuple(_subtask(c, scene, i) for i, c in enumerate(cfgs))
    return ComplexTask(name, detail, subs, derive_transfers(subs))


def _has_restricted_fixture(scene: SceneConfig) -> bool:
    return any(o.articulation is not None and o.articulation.range is not None
               and tuple(o.articulation.range) != (0.0, 1.0) for o in scene.objects)


def _staged_at(scene: SceneConfig, target: str, robot: RobotConfig) -> bool:
    """True when the robot's start pose already has the target within arm reach."""
    if scene.robot is None:
        return False
    pos = scene.get(target).position
    return ((pos[0] - scene.robot.base[0]) ** 2 + (pos[1] - scene.robot.base[1]) ** 2) ** 0.5 <= robot.eef_reach


def plan_initial_flow(subtask: SimpleTask, scene: SceneConfig, robot: RobotConfig | None = None,
                      staged: bool | None = None) -> ActionFlow:
    """Template action flow chosen by the shape of the subtask's goal."""
    robot = robot or RobotConfig()
    positives = [p for p in subtask.goal if not p.negated]
    negatives = [p for p in subtask.goal if p.negated]
    t = subtask.target
    if len(subtask.goal) == 1 and positives and positives[0].name == OPEN:
        art = scene.get(positives[0].args[0]).articulation
        rng = tuple(art.range) if art is not None and art.range is not None else None
        flow = [act("APPROACH"), act("CONVERGE"), act("GRASP"), act("ARTICULATE_OPEN", rng), act("UNGRASP")]
        if rng is not None:
            flow.append(act("RETREAT"))
        return tuple(flow)
    if len(subtask.goal) == 1 and negatives and negatives[0].name == OPEN:
        art = scene.get(negatives[0].args[0]).articulation
        rng = tuple(art.range) if art is not None and art.range is not None else CLOSE_DEFAULT_RANGE
        return (act("NAVIGATE_TO_TARGET"), act("APPROACH"), act("CONVERGE"), act("GRASP"),
                act("ARTICULATE_CLOSE", rng), act("UNGRASP"))
    if len(subtask.goal) == 1 and negatives and negatives[0].name in (ONTOP, INSIDE) \
            and negatives[0].args[0] == t:
        if staged is None:
            staged = _staged_at(scene, t, robot)
        flow = [] if staged else [act("NAVIGATE_TO_TARGET")]
        if _has_restricted_fixture(scene):
            flow.append(act("RETREAT"))
        flow += [act("APPROACH"), act("CONVERGE"), act("GRASP"), act("LIFT_EEF_UP", PICK_LIFT)]
        return tuple(flow)
    if len(subtask.goal) == 1 and positives and positives[0].name in (ONTOP, INSIDE) \
            and positives[0].args[0] == t:
        p = positives[0]
        flow = [act("NAVIGATE_TO_SUPPORT"), act("MOVE_BASE_FORWARD", PLACE_BASE_ADVANCE),
                act("MOVE_EEF_FORWARD", PLACE_EEF_ADVANCE)]
        dest = scene.get(p.args[1])
        if p.name == ONTOP or dest.object_class is ObjectClass.ManipulableB:
            flow.append(act("LIFT_EEF_DOWN", PLACE_LOWER))
        flow.append(act("UNGRASP"))
        return tuple(flow)
    raise NoTemplate(f"no flow template for goal {[str(p) for p in subtask.goal]}")


@dataclass(frozen=True)
class GenerationBundle:
    task: ComplexTask
    flows: Tuple[ActionFlow, ...]
    scales: Dict[str, float]
    bddl: Dict[str, str] = field(default_factory=dict)
    keyword: str = ""


def first_occurrence_scales(task: ComplexTask, scene: SceneConfig, robot: RobotConfig | None = None,
                            mode: str = "decimal") -> Dict[str, float]:
    scales: Dict[str, float] = {}
    for st in task.subtasks:
        if st.target not in scales:
            scales[st.target] = adjust_object_scale(scene.get(st.target), robot, mode)
    return scales


def generate(keyword: TaskKeyword | str, scene: SceneConfig, planner: Planner | None = None,
             robot: RobotConfig | None = None, scale_mode: str = "decimal") -> GenerationBundle:
    """Expand, decompose and instantiate; errors carry the failing ``stage``."""
    planner = planner or TemplatePlanner()
    robot = robot or RobotConfig()
    text = keyword.text if isinstance(keyword, TaskKeyword) else keyword
    try:
        name, detail = expand(keyword, scene, planner)
    except TaskWorldError as exc:
        raise _tag(exc, "expand")
    try:
        task = decompose(name, detail, scene, planner)
    except TaskWorldError as exc:
        raise _tag(exc, "decompose")
    try:
        scales = first_occurrence_scales(task, scene, robot, scale_mode)
        first = task.subtasks[0]
        start = initial_state(scene, robot, scales=scales)
        if not evaluate_goal(start, first.init):
            raise InvalidDecomposition(f"init of {first.name} does not hold in the scene")
        flows = tuple(plan_initial_flow(st, scene, robot, staged=None if k == 0 else False)
                      for k, st in enumerate(task.subtasks))
        bddl = {st.name: emit_bddl(st) for st in task.subtasks}
    except TaskWorldError as exc:
        raise _tag(exc, "instantiate")
    task = ComplexTask(task.name, task.detail, task.subtasks, derive_transfers(task.subtasks, flows))
    return GenerationBundle(task, flows, scales, bddl, text)


__all__ = [
    "GenerationBundle", "Planner", "PlannerRequest", "RemotePlanner", "Stage", "TaskKeyword",
    "TemplatePlanner", "decompose", "emit_bddl", "expand", "first_occurrence_scales", "generate",
    "plan_initial_flow", "summarize_scene",
]
