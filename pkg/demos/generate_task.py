"""Walk a keyword through expansion, decomposition and instantiation, then check the plan."""

from __future__ import annotations

from taskworld.graph import check_reachability
from taskworld.predicates import format_predicate
from taskworld.primitives import format_flow
from taskworld.scene import bundled_scene_path, load_scene
from taskworld.taskgen import generate


def main() -> None:
    scene = load_scene(bundled_scene_path("t1_kitchen"))
    bundle = generate("Put glass into fridge", scene)
    print(f"task: {bundle.task.name}")
    print(f"scales: {bundle.scales}")
    for k, (st, flow) in enumerate(zip(bundle.task.subtasks, bundle.flows), start=1):
        print(f"\n{k}. {st.name}")
        print("   init:", " ".join(format_predicate(p) for p in st.init))
        print("   goal:", " ".join(format_predicate(p) for p in st.goal))
        print("   flow:", format_flow(flow))
    report = check_reachability(scene, bundle.task, bundle.flows, scales=bundle.scales)
    print("\nfeasible:", report.feasible)


if __name__ == "__main__":
    main()
