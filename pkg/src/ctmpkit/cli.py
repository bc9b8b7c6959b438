"""Command line front end.

Subcommands: precompile, gen-instance, plan, validate, bench.  Exit codes:
0 success, 1 negative outcome (no plan, invalid plan), 2 bad input or
mismatched files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .bench import format_table, load_suite, run_instance, run_suite, write_csv
from .compiler import (
    CompileError, CtmpInstance, compile_instance, expand_plan,
    generate_instance, load_plan, save_plan, validate_plan,
)
from .geometry import Scene
from .tables import PrecompiledTables, build_tables


def _load_scene(path: str) -> Scene:
    return Scene.load(path)


def _load_tables(scene: Scene, path: str | None) -> PrecompiledTables:
    if path and Path(path).exists():
        return PrecompiledTables.load(path, scene)
    if path:
        raise FileNotFoundError(f"tables file {path} not found; run precompile")
    return build_tables(scene)


SUMMARY_COLUMNS = ("tables", "trajectories", "arm_confs", "base_confs",
                   "total_confs", "virtual_confs", "virtual_grasp_poses",
                   "relative_confs", "real_confs")


def cmd_precompile(args) -> int:
    scene = _load_scene(args.scene)
    t0 = time.perf_counter()
    tables = build_tables(scene)
    build_time = time.perf_counter() - t0
    tables.save(args.out)
    summary = tables.summary(scene)
    header = list(SUMMARY_COLUMNS) + ["time_s"]
    values = [str(summary[c]) for c in SUMMARY_COLUMNS] + [f"{build_time:.2f}"]
    widths = [max(len(h), len(v)) for h, v in zip(header, values)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    print("  ".join(v.rjust(w) for v, w in zip(values, widths)))
    print(f"wrote {args.out}")
    return 0


def cmd_gen_instance(args) -> int:
    scene = _load_scene(args.scene)
    tables = _load_tables(scene, args.tables)
    instance = generate_instance(
        scene, tables, args.objects, args.goals, args.seed, name=args.name)
    instance.save(args.out)
    print(f"wrote {args.out}: {len(instance.objects)} objects, "
          f"{len(instance.goals)} goals")
    return 0


def cmd_plan(args) -> int:
    scene = _load_scene(args.scene)
    tables = _load_tables(scene, args.tables)
    instance = CtmpInstance.load(args.instance)
    record, plan = run_instance(
        scene, tables, instance, algorithm=args.algorithm,
        node_budget=args.node_budget, time_budget=args.time_budget,
        validate=not args.no_validate)
    print(f"{record.instance}: {record.outcome}"
          + (f", {record.plan_length} actions" if plan else "")
          + f" (prep {record.prep_time:.2f}s, search {record.search_time:.2f}s)")
    if plan is None:
        return 1
    expanded = None
    if args.expand or args.render:
        compiled = compile_instance(scene, tables, instance)
        expanded = expand_plan(compiled, plan)
    if args.out:
        save_plan(args.out, instance, plan,
                  stats={"outcome": record.outcome,
                         "generated": record.generated,
                         "expanded": record.expanded,
                         "search_time": round(record.search_time, 3)},
                  expanded=expanded if args.expand else None)
        print(f"wrote {args.out}")
    if args.render:
        from .figures import render_plan
        render_plan(scene, tables, compiled, plan, args.render)
        print(f"wrote {args.render}")
    if record.validated is False:
        print("plan failed validation", file=sys.stderr)
        return 1
    return 0


def cmd_validate(args) -> int:
    scene = _load_scene(args.scene)
    tables = _load_tables(scene, args.tables)
    instance = CtmpInstance.load(args.instance)
    payload = load_plan(args.plan)
    if payload.get("scene_hash") != tables.scene_hash:
        print("plan was produced for a different scene", file=sys.stderr)
        return 2
    verdict = validate_plan(scene, tables, instance, payload["actions"])
    if verdict.ok:
        print(f"valid: {len(payload['actions'])} actions")
        return 0
    where = "" if verdict.step is None else f" at step {verdict.step}"
    print(f"invalid{where}: {verdict.reason}", file=sys.stderr)
    return 1


def cmd_bench(args) -> int:
    suite = load_suite(args.suite)
    scene_path = args.scene or suite.get("scene")
    if not scene_path:
        raise CompileError("no scene given on the command line or in the suite")
    scene = _load_scene(scene_path)
    tables = _load_tables(scene, args.tables)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(record):
        print(f"  {record.instance}: {record.outcome} "
              f"({record.total_time:.2f}s)")

    records = run_suite(scene, tables, suite, progress=progress)
    csv_path = out_dir / "bench.csv"
    write_csv(records, csv_path)
    table = format_table(records)
    (out_dir / "bench.txt").write_text(table)
    print(table, end="")
    from .figures import render_bench
    figures = render_bench(records, str(out_dir / "bench"))
    for p in [str(csv_path), str(out_dir / "bench.txt")] + figures:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctmpkit",
        description="Compile pick-and-place tasks to Functional STRIPS over "
                    "precompiled geometric lookup tables and solve them "
                    "with width-based search.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precompile", help="build lookup tables for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_precompile)

    p = sub.add_parser("gen-instance", help="sample a pick-and-place instance")
    p.add_argument("--scene", required=True)
    p.add_argument("--tables")
    p.add_argument("--objects", type=int, required=True)
    p.add_argument("--goals", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_instance)

    p = sub.add_parser("plan", help="solve one instance")
    p.add_argument("--scene", required=True)
    p.add_argument("--tables")
    p.add_argument("--instance", required=True)
    p.add_argument("--out")
    p.add_argument("--algorithm", choices=("bfws", "siw", "iw"),
                   default="bfws")
    p.add_argument("--time-budget", type=float, default=60.0)
    p.add_argument("--node-budget", type=int, default=300000)
    p.add_argument("--expand", action="store_true",
                   help="include world-frame motions in the plan file")
    p.add_argument("--render", metavar="PNG",
                   help="draw the plan over the scene")
    p.add_argument("--no-validate", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("validate", help="check a plan against direct geometry")
    p.add_argument("--scene", required=True)
    p.add_argument("--tables")
    p.add_argument("--instance", required=True)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="run a suite and render a report")
    p.add_argument("--suite", required=True)
    p.add_argument("--scene", help="override the scene named in the suite")
    p.add_argument("--tables")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CompileError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
