"""Run the bundled 12-scenario manifest and print the metric table."""

from __future__ import annotations

import sys

from taskworld.bench import load_manifest, run_bench
from taskworld.metrics import render_table


def main(jobs: int = 1) -> None:
    results, table = run_bench(load_manifest(), jobs=jobs)
    for r in results:
        print(f"{'ok  ' if r.complete_success else 'FAIL'} {r.scenario_id}")
    print()
    print(render_table(table), end="")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
