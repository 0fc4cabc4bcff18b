"""Reproduce the open-door collision and watch the oracle critic repair it."""

from __future__ import annotations

from taskworld.bench import apply_faults
from taskworld.evolve import OracleCritic, evolve_complex
from taskworld.primitives import format_flow
from taskworld.scene import bundled_scene_path, load_scene
from taskworld.taskgen import generate
from taskworld.world import initial_state


def main() -> None:
    scene = apply_faults(load_scene(bundled_scene_path("t1_kitchen")), {"door_swept_volume_blocks_path": True})
    bundle = generate("Put glass into fridge", scene)
    evo = evolve_complex(initial_state(scene, scales=bundle.scales), bundle.task, bundle.flows, critic=OracleCritic())
    for h in evo.histories:
        print(f"{h.task.name}: {h.outcome.value}")
        for r in h.records:
            print(f"  iter {r.iteration} {'ok ' if r.success else 'bad'} {format_flow(r.flow)}")
            bad = [c for c in r.critiques if not c.ok]
            for c in bad:
                print(f"      step {c.step_index}: {c.text}")
            if r.supervisor_reason:
                print(f"      supervisor: {r.supervisor_reason}")
    print("episode success:", evo.success)


if __name__ == "__main__":
    main()
