"""Success rate (SR), evolution success rate (ESR) and mean iterations (Iter).

Tables hold raw counts so partial tables from parallel workers merge exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import EmptyBatch, IoError

COMPLETE = "complete"
DASH = "—"


@dataclass(frozen=True)
class SubtaskResult:
    name: str
    succeeded: bool
    iterations_used: int
    attempted: bool = True

    @property
    def failed_initially(self) -> bool:
        return self.attempted and (not self.succeeded or self.iterations_used > 0)

    @property
    def rescued(self) -> bool:
        return self.succeeded and self.iterations_used > 0


@dataclass(frozen=True)
class EpisodeResult:
    scenario_id: str
    task: str
    subtasks: Tuple[SubtaskResult, ...]
    category: str = ""
    error: Optional[str] = None

    def __post_init__(self):
        for s in self.subtasks:
            if s.succeeded and not s.attempted:
                raise ValueError("a subtask cannot succeed without being attempted")

    @property
    def complete_success(self) -> bool:
        return self.error is None and bool(self.subtasks) and all(s.succeeded for s in self.subtasks)

    @property
    def total_iterations(self) -> int:
        return sum(s.iterations_used for s in self.subtasks)

    @property
    def failed_initially(self) -> bool:
        return self.error is not None or any(s.failed_initially for s in self.subtasks) \
            or not all(s.attempted for s in self.subtasks)

    def to_json(self) -> dict:
        return {"scenario_id": self.scenario_id, "task": self.task, "category": self.category,
                "error": self.error, "complete_success": self.complete_success,
                "total_iterations": self.total_iterations,
                "subtasks": [asdict(s) for s in self.subtasks]}

    @classmethod
    def from_json(cls, d: dict) -> "EpisodeResult":
        subs = tuple(SubtaskResult(s["name"], s["succeeded"], s["iterations_used"], s.get("attempted", True))
                     for s in d["subtasks"])
        return cls(d["scenario_id"], d["task"], subs, d.get("category", ""), d.get("error"))


@dataclass(frozen=True)
class Counts:
    attempts: int = 0
    successes: int = 0
    initial_failures: int = 0
    rescued: int = 0
    iteration_sum: int = 0  # over successes only

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(*(a + b for a, b in zip(astuple_counts(self), astuple_counts(other))))

    @property
    def sr(self) -> Optional[float]:
        return 100.0 * self.successes / self.attempts if self.attempts else None

    @property
    def esr(self) -> Optional[float]:
        return 100.0 * self.rescued / self.initial_failures if self.initial_failures else None

    @property
    def iter(self) -> Optional[float]:
        return self.iteration_sum / self.successes if self.successes else None

    def to_json(self) -> dict:
        d = asdict(self)
        d.update({"SR": _round(self.sr), "ESR": _round(self.esr), "Iter": _round(self.iter)})
        return d


def astuple_counts(c: Counts) -> Tuple[int, int, int, int, int]:
    return (c.attempts, c.successes, c.initial_failures, c.rescued, c.iteration_sum)


def _round(x: Optional[float]) -> Optional[float]:
    return None if x is None else round(x, 1)


def fmt(x: Optional[float]) -> str:
    return DASH if x is None else f"{x:.1f}"


def _column(k: int) -> str:
    return f"subtask_{k}"


@dataclass(frozen=True)
class MetricTable:
    """``cells[(category, column)]`` where column is ``subtask_<k>`` or ``complete``."""

    cells: Dict[Tuple[str, str], Counts] = field(default_factory=dict)

    def merge(self, other: "MetricTable") -> "MetricTable":
        out = dict(self.cells)
        for key, c in other.cells.items():
            out[key] = out.get(key, Counts()) + c
        return MetricTable(out)

    @property
    def categories(self) -> List[str]:
        return sorted({cat for cat, _ in self.cells})

    def columns(self, category: str | None = None) -> List[str]:
        cols = {col for cat, col in self.cells if category is None or cat == category}
        subs = sorted((c for c in cols if c != COMPLETE), key=lambda c: int(c.split("_")[1]))
        return subs + ([COMPLETE] if COMPLETE in cols else [])

    def cell(self, category: str | None, column: str) -> Counts:
        """Counts for one category, or pooled over all categories when ``category`` is None."""
        total = Counts()
        for (cat, col), c in self.cells.items():
            if col == column and (category is None or cat == category):
                total = total + c
        return total

    @property
    def overall(self) -> Counts:
        return self.cell(None, COMPLETE)

    @property
    def sr(self) -> Optional[float]:
        return self.overall.sr

    @property
    def esr(self) -> Optional[float]:
        return self.overall.esr

    @property
    def iter(self) -> Optional[float]:
        return self.overall.iter

    def subtask_avg(self, category: str | None = None) -> Optional[float]:
        """Unweighted mean of the per-subtask SRs."""
        srs = [self.cell(category, c).sr for c in self.columns(category) if c != COMPLETE]
        srs = [s for s in srs if s is not None]
        return sum(srs) / len(srs) if srs else None

    def to_json(self) -> dict:
        cats = {}
        for cat in self.categories:
            cats[cat] = {col: self.cell(cat, col).to_json() for col in self.columns(cat)}
            cats[cat]["subtask_avg_SR"] = _round(self.subtask_avg(cat))
        overall = {col: self.cell(None, col).to_json() for col in self.columns()}
        overall["subtask_avg_SR"] = _round(self.subtask_avg())
        return {"categories": cats, "overall": overall}

    @classmethod
    def from_json(cls, d: dict) -> "MetricTable":
        cells = {}
        for cat, cols in d["categories"].items():
            for col, c in cols.items():
                if col == "subtask_avg_SR":
                    continue
                cells[(cat, col)] = Counts(c["attempts"], c["successes"], c["initial_failures"], c["rescued"],
                                           c["iteration_sum"])
        return cls(cells)


def _episode_cells(r: EpisodeResult) -> Dict[Tuple[str, str], Counts]:
    cat = r.category or r.task
    cells = {}
    for k, s in enumerate(r.subtasks, start=1):
        if not s.attempted:
            continue
        cells[(cat, _column(k))] = Counts(1, int(s.succeeded), int(s.failed_initially), int(s.rescued),
                                          s.iterations_used if s.succeeded else 0)
    ok = r.complete_success
    cells[(cat, COMPLETE)] = Counts(1, int(ok), int(r.failed_initially), int(ok and r.failed_initially),
                                    r.total_iterations if ok else 0)
    return cells


def summarize(results: Sequence[EpisodeResult]) -> MetricTable:
    if not results:
        raise EmptyBatch("no episode results to summarize")
    table = MetricTable()
    for r in results:
        table = table.merge(MetricTable(_episode_cells(r)))
    return table


def render_table(table: MetricTable) -> str:
    """Plain-text table: SR | ESR | Iter per subtask, then Complete Task and Subtask Avg."""
    nsub = max((int(c.split("_")[1]) for _, c in table.cells if c != COMPLETE), default=0)
    heads = [f"Subtask {k}" for k in range(1, nsub + 1)] + ["Complete Task"]
    w = 20
    top = f"{'Task':<28}" + "".join(f"{h:^{w}}" for h in heads) + f"{'Subtask Avg':>12}"
    sub = f"{'':<28}" + "".join(f"{'SR':>6}{'ESR':>7}{'Iter':>6} " for _ in heads) + f"{'SR':>12}"
    lines = [top, sub, "-" * len(top)]

    def row(label: str, category: str | None) -> str:
        parts = []
        for k in range(1, nsub + 2):
            col = COMPLETE if k == nsub + 1 else _column(k)
            c = table.cell(category, col)
            if c.attempts == 0:
                parts.append(f"{'':>6}{'':>7}{'':>6} ")
            else:
                parts.append(f"{fmt(c.sr):>6}{fmt(c.esr):>7}{fmt(c.iter):>6} ")
        return f"{label:<28}" + "".join(parts) + f"{fmt(table.subtask_avg(category)):>12}"

    for cat in table.categories:
        lines.append(row(cat[:27], cat))
    lines.append("-" * len(top))
    lines.append(row("Overall", None))
    return "\n".join(lines) + "\n"


def summary_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".summary.json")


def load(path: str | Path) -> List[EpisodeResult]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read results {path}: {exc}") from None
    return [EpisodeResult.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def persist(results: Iterable[EpisodeResult], path: str | Path, append: bool = False) -> MetricTable:
    """Write episode JSONL and ``<path>.summary.json``; with ``append`` the summary covers the whole file."""
    results = list(results)
    p = Path(path)
    try:
        with open(p, "a" if append else "w", encoding="utf-8") as fh:
            for r in results:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write results {p}: {exc}") from None
    everything = load(p) if append else results
    table = summarize(everything)
    try:
        summary_path(p).write_text(json.dumps(table.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write summary for {p}: {exc}") from None
    return table


def load_summary(path: str | Path) -> MetricTable:
    try:
        return MetricTable.from_json(json.loads(summary_path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise IoError(f"cannot read summary for {path}: {exc}") from None


__all__ = [
    "COMPLETE", "Counts", "DASH", "EpisodeResult", "MetricTable", "SubtaskResult", "fmt", "load", "load_summary",
    "persist", "render_table", "summarize", "summary_path",
]
