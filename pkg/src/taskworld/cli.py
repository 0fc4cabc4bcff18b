"""Command-line entry point: ``taskworld {validate,generate,run,evolve,bench}``.

Exit codes: 0 ok, 1 validation, 2 io, 3 generation, 4 remote unavailable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .bench import apply_faults, load_manifest, resolve_scene, run_bench
from .codec import encode_flow
from .errors import (
    CriticUnavailable, InvalidDecomposition, IoError, NoTemplate, PlannerUnavailable, TaskWorldError,
    UnresolvedObject,
)
from .evolve import EvolutionConfig, OracleCritic, RemoteCritic, evolve_complex
from .graph import check_reachability
from .metrics import persist, render_table
from .observe import View
from .predicates import format_predicate
from .primitives import format_flow
from .scene import load_scene
from .taskgen import RemotePlanner, TemplatePlanner, generate
from .world import TaskContext, apply_transfer, execute_flow, initial_state, snapshot_predicates, trace_to_jsonl

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_GENERATION, EXIT_REMOTE = 0, 1, 2, 3, 4


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (PlannerUnavailable, CriticUnavailable)):
        return EXIT_REMOTE
    if isinstance(exc, (IoError, OSError)):
        return EXIT_IO
    if isinstance(exc, (NoTemplate, UnresolvedObject, InvalidDecomposition)):
        return EXIT_GENERATION
    return EXIT_VALIDATION


def _fail(exc: BaseException) -> int:
    stage = getattr(exc, "stage", None)
    path = getattr(exc, "path", "")
    diag = {"error": type(exc).__name__, "message": str(exc)}
    if stage:
        diag["stage"] = stage
    if path:
        diag["path"] = path
    print(json.dumps(diag, sort_keys=True), file=sys.stderr)
    return exit_code(exc)


def _dump(path: Path, value: Any) -> None:
    path.write_text(json.dumps(value, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(args) -> Optional[Path]:
    if not args.out:
        return None
    p = Path(args.out)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {p}: {exc}") from None
    return p


def _parse_faults(items: Sequence[str]) -> Dict[str, Any]:
    faults: Dict[str, Any] = {}
    for item in items or ():
        name, _, raw = item.partition("=")
        try:
            faults[name] = json.loads(raw) if raw else True
        except json.JSONDecodeError:
            faults[name] = raw
    return faults


def _load(args):
    path = Path(args.scene)
    if not path.exists() and "/" not in args.scene and not args.scene.endswith(".json"):
        scene = resolve_scene(args.scene)
    elif not path.exists():
        raise IoError(f"scene file {path} does not exist")
    else:
        scene = load_scene(path)
    return apply_faults(scene, _parse_faults(getattr(args, "fault", None)))


def _planner(args):
    return RemotePlanner() if args.planner == "remote" else TemplatePlanner()


def _cfg(args) -> EvolutionConfig:
    views = tuple(View(v) for v in args.views.split(",")) if args.views else (View.Global, View.Head)
    return EvolutionConfig(tau_max=args.tau_max, p1=args.p1, views=views)


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    path = Path(args.scene)
    if not path.exists():
        return _fail(IoError(f"scene file {path} does not exist"))
    try:
        scene = load_scene(path)
        state = initial_state(scene)
        snap = snapshot_predicates(state)
    except TaskWorldError as exc:
        return _fail(exc)
    report = {"scene_id": scene.scene_id, "valid": True, "objects": len(scene.objects),
              "true_predicates": sorted(str(p) for p, v in snap.items() if v)}
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _bundle_json(bundle) -> dict:
    task = bundle.task
    return {
        "keyword": bundle.keyword,
        "task_activity_name": task.name,
        "task_detail_message": task.detail,
        "subtasks": [{"name": st.name, "description": st.description, "target_id": st.target,
                      "support_init_id": st.support_init, "support_goal_id": st.support_goal,
                      "bddl_category": st.bddl_category, "kind": st.kind,
                      "init": [format_predicate(p) for p in st.init],
                      "goal": [format_predicate(p) for p in st.goal]} for st in task.subtasks],
        "transfers": [{"prev_target": e.prev_target, "next_target": e.next_target,
                       "end_action": e.end_action.name if e.end_action else None,
                       "start_action": e.start_action.name if e.start_action else None} for e in task.transfers],
        "flows": [encode_flow(f) for f in bundle.flows],
        "scales": bundle.scales,
    }


def cmd_generate(args) -> int:
    scene = _load(args)
    bundle = generate(args.keyword, scene, _planner(args))
    out = _out_dir(args)
    doc = _bundle_json(bundle)
    if out is not None:
        _dump(out / "task.json", doc)
        _dump(out / "flows.json", doc["flows"])
        _dump(out / "scales.json", bundle.scales)
        bdir = out / "bddl"
        bdir.mkdir(exist_ok=True)
        for k, st in enumerate(bundle.task.subtasks, start=1):
            (bdir / f"{k:02d}_{st.name}.bddl").write_text(bundle.bddl[st.name], encoding="utf-8")
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    scene = _load(args)
    bundle = generate(args.keyword, scene, _planner(args))
    out = _out_dir(args)
    state = initial_state(scene, scales=bundle.scales)
    lines: List[str] = []
    subtasks = bundle.task.subtasks
    for k, (st, flow) in enumerate(zip(subtasks, bundle.flows)):
        trace = execute_flow(state, flow, st)
        print(f"subtask {k + 1} {st.name}: {'success' if trace.success else 'FAILED'}  {format_flow(flow)}")
        lines.append(trace_to_jsonl(trace, scene.scene_id, st.name))
        state = trace.final_state
        if k + 1 < len(subtasks):
            state = apply_transfer(state, bundle.task.transfers[k], TaskContext.of(subtasks[k + 1]))
    report = check_reachability(scene, bundle.task, bundle.flows, scales=bundle.scales)
    print(json.dumps(report.to_json(), sort_keys=True))
    if out is not None:
        (out / "trace.jsonl").write_text("".join(lines), encoding="utf-8")
        _dump(out / "reachability.json", report.to_json())
    return EXIT_OK


def cmd_evolve(args) -> int:
    scene = _load(args)
    bundle = generate(args.keyword, scene, _planner(args))
    critic = RemoteCritic() if args.critic == "remote" else OracleCritic()
    evo = evolve_complex(initial_state(scene, scales=bundle.scales), bundle.task, bundle.flows, _cfg(args), critic)
    for k, h in enumerate(evo.histories, start=1):
        print(f"subtask {k} {h.task.name}: {h.outcome.value} after {h.iterations_used} evolution iteration(s)")
        for r in h.records:
            print(f"  iter {r.iteration} {'ok ' if r.success else 'bad'} {format_flow(r.flow)}")
    skipped = len(bundle.task.subtasks) - len(evo.histories)
    if skipped:
        print(f"{skipped} subtask(s) not attempted")
    print("overall:", "success" if evo.success else "failure")
    out = _out_dir(args)
    if out is not None:
        (out / "evolution.jsonl").write_text(evo.to_jsonl(), encoding="utf-8")
    return EXIT_OK


def cmd_bench(args) -> int:
    scenarios = load_manifest(args.manifest)
    results, table = run_bench(scenarios, jobs=args.jobs, cfg=_cfg(args))
    for r in results:
        status = "ok  " if r.complete_success else "FAIL"
        print(f"{status} {r.scenario_id:<16} iters={r.total_iterations}" + (f"  {r.error}" if r.error else ""))
    print()
    print(render_table(table), end="")
    out = _out_dir(args)
    if out is not None:
        persist(results, out / "results.jsonl")
        (out / "table.txt").write_text(render_table(table), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taskworld", description="Task generation and self-evolving execution.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, keyword=True):
        sp.add_argument("--scene", required=True, help="scene file or bundled scene name")
        if keyword:
            sp.add_argument("--keyword", required=True)
            sp.add_argument("--planner", choices=("template", "remote"), default="template")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="recorded for reproducibility; the pipeline is deterministic")
        sp.add_argument("--fault", action="append", default=[], metavar="NAME[=JSON]",
                        help="fault-injection hook, e.g. door_swept_volume_blocks_path=true")

    def evo(sp):
        sp.add_argument("--tau-max", type=int, default=5)
        sp.add_argument("--p1", type=int, default=1)
        sp.add_argument("--views", default="Global,Head", help="comma-separated subset of Global,Head,Wrist")

    v = sub.add_parser("validate", help="load a scene and check its invariants")
    v.add_argument("scene")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("generate", help="expand, decompose and instantiate a task")
    common(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="execute the initial flows open-loop")
    common(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evolve", help="run the self-evolution loop")
    common(e)
    e.add_argument("--critic", choices=("oracle", "remote"), default="oracle")
    evo(e)
    e.set_defaults(func=cmd_evolve)

    b = sub.add_parser("bench", help="run a scenario manifest and print the metric table")
    b.add_argument("--manifest", help="manifest JSON (defaults to the bundled 12-scenario manifest)")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--critic", choices=("oracle",), default="oracle")
    b.add_argument("--out", help="output directory")
    b.add_argument("--seed", type=int, default=0)
    evo(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (TaskWorldError, OSError) as exc:
        return _fail(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
