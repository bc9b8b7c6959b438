"""Batch runner: generate, solve and validate instances, report results.

A suite is a JSON file naming a scene and a list of run groups (object
count, goal count, seeds).  Each run produces a RunRecord; the reporter
writes a CSV, an aligned text table sorted by task size, and figures next
to them.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

from .compiler import (
    CompileError, CtmpInstance, compile_instance, generate_instance,
    validate_plan,
)
from .geometry import Scene
from .search import (
    bfws, compute_obstructing_set, iw_driver, make_counters, make_distance,
    siw,
)
from .tables import PrecompiledTables

OUTCOMES = ("solved", "timeout", "memory-out", "unsolvable")

_OUTCOME_FROM_SEARCH = {
    "solved": "solved",
    "timeout": "timeout",
    "budget": "memory-out",
    "exhausted": "unsolvable",
}


@dataclass
class RunRecord:
    instance: str
    n_objects: int
    n_goals: int
    algorithm: str
    outcome: str
    plan_length: int | None
    generated: int
    expanded: int
    prep_time: float
    search_time: float
    total_time: float
    validated: bool | None = None

    def row(self) -> dict:
        d = asdict(self)
        for k in ("prep_time", "search_time", "total_time"):
            d[k] = round(d[k], 3)
        return d


def solve_compiled(compiled, *, algorithm: str = "bfws",
                   node_budget: int | None = 300000,
                   time_budget: float | None = 60.0,
                   prune_w3: bool = False):
    """Run the obstruction analysis and the chosen search.  Returns
    (search result or None, obstruction info, prep seconds, search seconds).
    A goal shown unreachable by the analysis skips the search."""
    t0 = time.perf_counter()
    obstruction = compute_obstructing_set(compiled)
    prep = time.perf_counter() - t0
    if obstruction.goal_unreachable:
        return None, obstruction, prep, 0.0
    counters = make_counters(compiled, obstruction.confs)
    t0 = time.perf_counter()
    if algorithm == "bfws":
        result = bfws(compiled.ground, counters=counters,
                      features=compiled.derived_features,
                      distance=make_distance(compiled),
                      node_budget=node_budget, time_budget=time_budget,
                      prune_w3=prune_w3)
    elif algorithm == "siw":
        result = siw(compiled.ground,
                     unsat=compiled.unsatisfied_goals,
                     features=compiled.derived_features,
                     node_budget=node_budget)
    elif algorithm == "iw":
        r = iw_driver(compiled.ground, features=compiled.derived_features,
                      node_budget=node_budget)
        from .search import SearchResult
        outcome = "solved" if r.solved else (
            "budget" if r.budget_hit else "exhausted")
        result = SearchResult(outcome, r.plan if r.solved else None,
                              r.generated, r.expanded)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    search_time = time.perf_counter() - t0
    return result, obstruction, prep, search_time


def run_instance(scene: Scene, tables: PrecompiledTables,
                 instance: CtmpInstance, *, algorithm: str = "bfws",
                 node_budget: int | None = 300000,
                 time_budget: float | None = 60.0,
                 validate: bool = True) -> tuple[RunRecord, list[str] | None]:
    """Compile, analyze, search, optionally validate.  Returns the record
    and the plan action names (None when unsolved)."""
    total0 = time.perf_counter()
    t0 = time.perf_counter()
    compiled = compile_instance(scene, tables, instance)
    compile_time = time.perf_counter() - t0
    result, obstruction, prep, search_time = solve_compiled(
        compiled, algorithm=algorithm, node_budget=node_budget,
        time_budget=time_budget)
    prep += compile_time
    if result is None:
        outcome, plan = "unsolvable", None
        generated = expanded = 0
    else:
        outcome = _OUTCOME_FROM_SEARCH[result.outcome]
        plan = [a.name for a in result.plan] if result.solved else None
        generated, expanded = result.generated, result.expanded
    validated = None
    if validate and plan is not None:
        validated = bool(validate_plan(scene, tables, instance, plan))
    record = RunRecord(
        instance=instance.name, n_objects=len(instance.objects),
        n_goals=len(instance.goals), algorithm=algorithm, outcome=outcome,
        plan_length=len(plan) if plan is not None else None,
        generated=generated, expanded=expanded,
        prep_time=prep, search_time=search_time,
        total_time=time.perf_counter() - total0, validated=validated)
    return record, plan


def load_suite(path) -> dict:
    with open(path) as fh:
        suite = json.load(fh)
    if "runs" not in suite:
        raise ValueError("suite file needs a 'runs' list")
    return suite


def suite_instances(scene: Scene, tables: PrecompiledTables,
                    suite: dict) -> list[CtmpInstance]:
    out = []
    for group in suite["runs"]:
        n, g = group["n_objects"], group["n_goals"]
        for seed in group["seeds"]:
            out.append(generate_instance(scene, tables, n, g, seed))
    return out


def run_suite(scene: Scene, tables: PrecompiledTables, suite: dict,
              progress=None) -> list[RunRecord]:
    algorithm = suite.get("algorithm", "bfws")
    node_budget = suite.get("node_budget", 300000)
    time_budget = suite.get("time_budget", 60.0)
    records = []
    for instance in suite_instances(scene, tables, suite):
        record, _ = run_instance(
            scene, tables, instance, algorithm=algorithm,
            node_budget=node_budget, time_budget=time_budget)
        records.append(record)
        if progress:
            progress(record)
    return sorted(records, key=lambda r: (r.n_objects, r.n_goals, r.instance))


FIELDS = ("instance", "n_objects", "n_goals", "algorithm", "outcome",
          "plan_length", "generated", "expanded", "prep_time", "search_time",
          "total_time", "validated")


def write_csv(records: list[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(r.row())


def format_table(records: list[RunRecord]) -> str:
    rows = [[str(r.row()[f]) for f in FIELDS] for r in records]
    widths = [max(len(f), *(len(row[i]) for row in rows)) if rows else len(f)
              for i, f in enumerate(FIELDS)]
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(FIELDS), line(["-" * w for w in widths])]
    out.extend(line(row) for row in rows)
    solved = sum(1 for r in records if r.outcome == "solved")
    out.append("")
    out.append(f"solved {solved}/{len(records)}")
    return "\n".join(out) + "\n"
