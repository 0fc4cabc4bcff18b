"""Per-action observation capture, uniform downsampling and sliding windows."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Sequence, Tuple

from .errors import InvalidParam, StepOutOfRange
from .world import ExecutionTrace, WorldState, all_predicates

DEFAULT_CAP = 6


class View(Enum):
    Global = "Global"
    Head = "Head"
    Wrist = "Wrist"


@dataclass(frozen=True)
class Frame:
    tick: int
    view: View
    payload: Any

    def to_json(self) -> dict:
        return {"tick": self.tick, "view": self.view.value, "payload": self.payload}


@dataclass(frozen=True)
class ObservationSet:
    """``steps[j-1][view]`` holds the frames of step j (steps are 1-based)."""

    steps: Tuple[Dict[View, Tuple[Frame, ...]], ...]
    views: Tuple[View, ...]
    cap: int = DEFAULT_CAP

    def __len__(self) -> int:
        return len(self.steps)

    def frames(self, step: int, view: View) -> Tuple[Frame, ...]:
        if not 1 <= step <= len(self.steps):
            raise StepOutOfRange(f"step {step} outside 1..{len(self.steps)}")
        return self.steps[step - 1][view]


def downsample_indices(n: int, cap: int) -> List[int]:
    if cap < 1:
        raise InvalidParam("cap must be >= 1")
    if n <= cap:
        return list(range(n))
    if cap == 1:
        return [0]
    # round half up, so n=14 keeps {0, 3, 5, 8, 10, 13}
    return [int(math.floor(i * (n - 1) / (cap - 1) + 0.5)) for i in range(cap)]


def downsample(frames: Sequence[Any], cap: int = DEFAULT_CAP) -> List[Any]:
    return [frames[i] for i in downsample_indices(len(frames), cap)]


def frame_summary(state: WorldState, view: View, events: Sequence = ()) -> dict:
    """Deterministic structured stand-in for an image of ``state`` from ``view``."""
    snap = state.snapshot_json()
    out = {
        "view": view.value,
        "tick": state.tick,
        "base": snap.get("base"),
        "eef": snap.get("eef"),
        "held": state.held_object,
        "true_predicates": sorted(str(p) for p in all_predicates(state)),
        "events": [e.to_json() for e in events],
    }
    if view is View.Global:
        out["objects"] = snap.get("objects")
        out["joints"] = snap.get("joints")
    return out


def _lerp_state(before: WorldState, after: WorldState, frac: float) -> WorldState:
    """Intermediate frames interpolate the robot pose; objects snap to the post state."""
    if frac >= 1.0:
        return after
    s = after.copy()
    s.base = tuple(b + (a - b) * frac for b, a in zip(before.base, after.base))
    s.arm = tuple(b + (a - b) * frac for b, a in zip(before.arm, after.arm))
    s.tick = before.tick + max(1, int(round((after.tick - before.tick) * frac)))
    return s


def capture(trace: ExecutionTrace, cfg=None, views: Sequence[View] | None = None, p2: int | None = None,
            cap: int | None = None) -> ObservationSet:
    """``ceil(t_j / p2)`` frames per step and view, then downsampled to the cap."""
    if cfg is not None:
        views = views or cfg.views
        p2 = p2 or cfg.p2
        cap = cap or cfg.max_frames_per_action
    views = tuple(View(v) if not isinstance(v, View) else v for v in (views or (View.Global, View.Head)))
    p2 = p2 or 1
    cap = cap or DEFAULT_CAP
    steps = []
    prev = trace.initial_state
    for st in trace.steps:
        n = max(1, math.ceil(st.duration_ticks / p2))
        keep = downsample_indices(n, cap)
        per_view: Dict[View, Tuple[Frame, ...]] = {}
        for v in views:
            frames = []
            for i in keep:
                s = _lerp_state(prev, st.post_state, (i + 1) / n)
                evs = st.events if i == n - 1 else ()
                frames.append(Frame(s.tick, v, frame_summary(s, v, evs)))
            per_view[v] = tuple(frames)
        steps.append(per_view)
        prev = st.post_state
    return ObservationSet(tuple(steps), views, cap)


def window(obs: ObservationSet, step: int, p1: int) -> Dict[View, List[Frame]]:
    """Frames of steps ``max(step - p1, 1)..step`` concatenated per view."""
    if p1 < 0:
        raise InvalidParam("p1 must be >= 0")
    if not 1 <= step <= len(obs):
        raise StepOutOfRange(f"step {step} outside 1..{len(obs)}")
    out: Dict[View, List[Frame]] = {v: [] for v in obs.views}
    for j in range(max(step - p1, 1), step + 1):
        for v in obs.views:
            out[v].extend(obs.steps[j - 1][v])
    return out


def window_to_json(win: Mapping[View, Sequence[Frame]], step: int) -> dict:
    return {"step": step, "views": {v.value: [f.payload for f in fs] for v, fs in win.items()}}


def rasterize(state: WorldState, view: View = View.Global, size: int = 64, span: float | None = None) -> bytes:
    """Top-down occupancy image as binary PGM (P5).

    Global covers the floor, Head is centred on the base and Wrist on the
    end effector with a tighter span.
    """
    import numpy as np

    fx, fy = state.scene.floor_extent[0], state.scene.floor_extent[1]
    if view is View.Global:
        cx, cy, half = fx / 2, fy / 2, (span or max(fx, fy)) / 2
    elif view is View.Head:
        cx, cy, half = state.base[0], state.base[1], (span or 2.0) / 2
    else:
        cx, cy, half = state.eef[0], state.eef[1], (span or 0.6) / 2
    img = np.zeros((size, size), dtype=np.uint8)
    xs = cx - half + (np.arange(size) + 0.5) * (2 * half / size)
    ys = cy + half - (np.arange(size) + 0.5) * (2 * half / size)
    gx, gy = np.meshgrid(xs, ys)
    for oid in sorted(state.specs):
        b = state.box(oid)
        shade = 255 if oid == state.held_object else 96 + int(160 * min(b[5], 1.6) / 1.6) - 1
        mask = (gx >= b[0]) & (gx <= b[3]) & (gy >= b[1]) & (gy <= b[4])
        img[mask] = np.maximum(img[mask], shade)
    ex, ey = state.eef[0], state.eef[1]
    mask = (np.abs(gx - ex) <= 2 * half / size) & (np.abs(gy - ey) <= 2 * half / size)
    img[mask] = 255
    header = f"P5\n{size} {size}\n255\n".encode("ascii")
    return header + img.tobytes()


def observation_digest(obs: ObservationSet) -> str:
    """Canonical JSON of every payload, handy for determinism checks."""
    return json.dumps([{v.value: [f.to_json() for f in fs] for v, fs in step.items()} for step in obs.steps],
                      sort_keys=True, separators=(",", ":"))


__all__ = [
    "DEFAULT_CAP", "Frame", "ObservationSet", "View", "capture", "downsample", "downsample_indices",
    "frame_summary", "observation_digest", "rasterize", "window", "window_to_json",
]
