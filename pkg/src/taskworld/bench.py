"""Scenario manifests, fault injection and batch episodes."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, List, Mapping, Optional, Sequence, Tuple

from .errors import InvalidParam, IoError, ParseError, TaskWorldError
from .evolve import ComplexEvolution, EvolutionConfig, OracleCritic, evolve_complex
from .metrics import EpisodeResult, MetricTable, SubtaskResult, summarize
from .scene import SceneConfig, bundled_scene_path, data_dir, load_scene
from .taskgen import generate
from .world import initial_state

DOOR_BLOCK_DEPTH = 0.5
DOOR_BLOCK_LATERAL = (0.05, 0.35)
KNOWN_FAULTS = ("door_swept_volume_blocks_path", "stiff_door", "weld_target", "bowl_rim_offset", "translate",
                "move_object")


@dataclass(frozen=True)
class Scenario:
    id: str
    scene: str
    keyword: str
    family: str = ""
    faults: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "Scenario":
        for key in ("id", "scene", "keyword"):
            if not isinstance(d.get(key), str) or not d.get(key):
                raise InvalidParam(f"scenario needs a non-empty {key!r}")
        faults = dict(d.get("faults") or {})
        unknown = sorted(set(faults) - set(KNOWN_FAULTS))
        if unknown:
            raise InvalidParam(f"unknown fault hooks {unknown}")
        return cls(d["id"], d["scene"], d["keyword"], d.get("family", ""), faults)

    def to_json(self) -> dict:
        return {"id": self.id, "family": self.family, "scene": self.scene, "keyword": self.keyword,
                "faults": dict(self.faults)}


def default_manifest_path() -> Path:
    return data_dir() / "bench_manifest.json"


def load_manifest(path: str | Path | None = None) -> List[Scenario]:
    p = Path(path) if path is not None else default_manifest_path()
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read manifest {p}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest {p} is not valid JSON: {exc}") from None
    entries = raw["scenarios"] if isinstance(raw, dict) else raw
    base = p.parent
    out = []
    for d in entries:
        s = Scenario.from_json(d)
        if not s.scene.endswith(".json"):
            out.append(s)
        else:
            out.append(replace(s, scene=str((base / s.scene).resolve())))
    return out


def resolve_scene(ref: str) -> SceneConfig:
    """A bundled scene name (``t1_kitchen``) or a path to a scene file."""
    if ref.endswith(".json") or "/" in ref:
        return load_scene(ref)
    return load_scene(bundled_scene_path(ref))


# ---------------------------------------------------------------- faults

def _shift(v: Sequence[float], dx: float, dy: float) -> Tuple[float, ...]:
    return (v[0] + dx, v[1] + dy) + tuple(v[2:])


def _door_block_box(spec) -> Tuple[float, ...]:
    """Swing volume reaching into the approach lane just right of the front face centre."""
    b = spec.box
    fx, fy = round(spec.front[0]), round(spec.front[1])
    cx, cy = (b[0] + b[3]) / 2, (b[1] + b[4]) / 2
    face = (b[3] if fx > 0 else b[0] if fx < 0 else cx, b[4] if fy > 0 else b[1] if fy < 0 else cy)
    lx, ly = -fy, fx
    pts = []
    for d in (0.0, DOOR_BLOCK_DEPTH):
        for lat in DOOR_BLOCK_LATERAL:
            pts.append((face[0] + fx * d + lx * lat, face[1] + fy * d + ly * lat))
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    return (round(min(xs), 6), round(min(ys), 6), 0.0, round(max(xs), 6), round(max(ys), 6), b[5])


def apply_faults(scene: SceneConfig, faults: Mapping[str, Any]) -> SceneConfig:
    """Deterministic scene edits that reproduce specific failure modes."""
    objs = list(scene.objects)
    robot = scene.robot
    regions = scene.room_regions
    for name in KNOWN_FAULTS:
        if name not in faults or faults[name] in (None, False):
            continue
        val = faults[name]
        if name == "door_swept_volume_blocks_path":
            objs = [replace(o, articulation=replace(o.articulation, swept_volume=_door_block_box(o)))
                    if o.articulation is not None else o for o in objs]
        elif name == "stiff_door":
            thr = 0.45 if val is True else float(val)
            objs = [replace(o, articulation=replace(o.articulation, open_threshold=thr))
                    if o.articulation is not None else o for o in objs]
        elif name == "weld_target":
            ids = {val} if isinstance(val, str) else set(val)
            missing = ids - {o.id for o in objs}
            if missing:
                raise InvalidParam(f"weld_target names unknown objects {sorted(missing)}")
            objs = [replace(o, welded=True) if o.id in ids else o for o in objs]
        elif name == "bowl_rim_offset":
            off = float(val)
            start = robot.base if robot is not None else (0.0, 0.0)
            new = []
            for o in objs:
                if o.is_container:
                    dx, dy = o.position[0] - start[0], o.position[1] - start[1]
                    if abs(dx) >= abs(dy):
                        o = replace(o, position=_shift(o.position, math.copysign(off, dx), 0.0))
                    else:
                        o = replace(o, position=_shift(o.position, 0.0, math.copysign(off, dy)))
                new.append(o)
            objs = new
        elif name == "move_object":
            oid, (dx, dy) = val["id"], val["delta"]
            if oid not in {o.id for o in objs}:
                raise InvalidParam(f"move_object names unknown object {oid!r}")
            objs = [replace(o, position=_shift(o.position, dx, dy)) if o.id == oid else o for o in objs]
        elif name == "translate":
            dx, dy = float(val[0]), float(val[1])
            new = []
            for o in objs:
                art = o.articulation
                if art is not None:
                    sv = art.swept_volume
                    art = replace(art, swept_volume=_shift(sv[:3], dx, dy) + _shift(sv[3:], dx, dy),
                                  handle=_shift(art.handle, dx, dy) if art.handle is not None else None)
                new.append(replace(o, position=_shift(o.position, dx, dy), articulation=art))
            objs = new
            if robot is not None:
                robot = replace(robot, base=_shift(robot.base, dx, dy))
            regions = tuple((n, _shift(b[:3], dx, dy) + _shift(b[3:], dx, dy)) for n, b in regions)
    return replace(scene, objects=tuple(objs), robot=robot, room_regions=regions)


# ---------------------------------------------------------------- episodes

@dataclass
class EpisodeRun:
    scenario: Scenario
    result: EpisodeResult
    evolution: Optional[ComplexEvolution] = None


def run_episode(scenario: Scenario, cfg: EvolutionConfig | None = None) -> EpisodeRun:
    """Generate, then evolve every subtask with the oracle critic. Errors are recorded, not raised."""
    cfg = cfg or EvolutionConfig()
    family = scenario.family or scenario.scene
    names: List[str] = []
    try:
        scene = apply_faults(resolve_scene(scenario.scene), scenario.faults)
        bundle = generate(scenario.keyword, scene)
        names = [st.name for st in bundle.task.subtasks]
        world = initial_state(scene, scales=bundle.scales)
        evo = evolve_complex(world, bundle.task, bundle.flows, cfg, OracleCritic())
    except TaskWorldError as exc:
        stage = f"[{exc.stage}] " if exc.stage else ""
        subs = tuple(SubtaskResult(n, False, 0, attempted=False) for n in names)
        err = f"{type(exc).__name__}: {stage}{exc}"
        return EpisodeRun(scenario, EpisodeResult(scenario.id, scenario.keyword, subs, family, err))
    subs = []
    for k, n in enumerate(names):
        if k < len(evo.histories):
            h = evo.histories[k]
            subs.append(SubtaskResult(n, h.succeeded, h.iterations_used))
        else:
            subs.append(SubtaskResult(n, False, 0, attempted=False))
    return EpisodeRun(scenario, EpisodeResult(scenario.id, evo.task.name, tuple(subs), family), evo)


def _episode_job(args: Tuple[dict, dict]) -> dict:
    scen, cfg = args
    cfg_obj = EvolutionConfig(**cfg)
    return run_episode(Scenario.from_json(scen), cfg_obj).result.to_json()


def run_bench(scenarios: Sequence[Scenario], jobs: int = 1, cfg: EvolutionConfig | None = None
              ) -> Tuple[List[EpisodeResult], MetricTable]:
    """Run every scenario (in parallel when ``jobs > 1``) and summarize; output order follows the input."""
    cfg = cfg or EvolutionConfig()
    if jobs <= 1:
        results = [run_episode(s, cfg).result for s in scenarios]
    else:
        cfg_d = {"tau_max": cfg.tau_max, "p1": cfg.p1, "p2": cfg.p2,
                 "max_frames_per_action": cfg.max_frames_per_action, "views": [v.value for v in cfg.views]}
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_episode_job, [(s.to_json(), cfg_d) for s in scenarios]))
        results = [EpisodeResult.from_json(d) for d in raw]
    return results, summarize(results)


__all__ = [
    "EpisodeRun", "KNOWN_FAULTS", "Scenario", "apply_faults", "default_manifest_path", "load_manifest",
    "resolve_scene", "run_bench", "run_episode",
]

