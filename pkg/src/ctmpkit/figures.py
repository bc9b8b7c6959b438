"""Figure rendering for scenes, precompiled tables and benchmark results.

All figures go straight to files through the Agg backend so they work
headless.
"""

from __future__ import annotations

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .geometry import Scene, transform_to_world
from .tables import PrecompiledTables


def render_scene(scene: Scene, tables: PrecompiledTables | None, path) -> None:
    """Top view: tables, sampled base poses with headings, real configs."""
    fig, ax = plt.subplots(figsize=(7, 6))
    for t in scene.tables:
        ax.add_patch(plt.Rectangle((t.x0, t.y0), t.x1 - t.x0, t.y1 - t.y0,
                                   facecolor="#d9c9a3", edgecolor="black"))
    if tables is not None:
        for b in tables.base_poses.values():
            ax.plot(b.x, b.y, "o", color="#2060c0", markersize=3)
            ax.arrow(b.x, b.y, 0.12 * math.cos(b.theta), 0.12 * math.sin(b.theta),
                     head_width=0.03, color="#2060c0", alpha=0.6)
        for s, t in tables.base_edges.values():
            ps, pt = tables.base_poses[s], tables.base_poses[t]
            ax.plot([ps.x, pt.x], [ps.y, pt.y], "-", color="#2060c0",
                    linewidth=0.3, alpha=0.3)
        if tables.real_configs:
            pts = np.array(list(tables.real_configs.values()))
            ax.plot(pts[:, 0], pts[:, 1], "s", color="#b03030", markersize=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("scene layout")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_plan(scene: Scene, tables: PrecompiledTables, compiled,
                action_names: list[str], path) -> None:
    """Scene overlaid with the base tour and the arm motions of a plan."""
    from .compiler import expand_plan

    script = expand_plan(compiled, action_names)
    fig, ax = plt.subplots(figsize=(7, 6))
    for t in scene.tables:
        ax.add_patch(plt.Rectangle((t.x0, t.y0), t.x1 - t.x0, t.y1 - t.y0,
                                   facecolor="#d9c9a3", edgecolor="black"))
    for o, p in compiled.instance.objects.items():
        ax.plot(p[0], p[1], "o", color="#b03030", markersize=5)
        ax.annotate(o, (p[0], p[1]), fontsize=7, xytext=(3, 3),
                    textcoords="offset points")
    for o, p in compiled.instance.goals.items():
        ax.plot(p[0], p[1], "*", color="#208020", markersize=10)
        ax.annotate(o, (p[0], p[1]), fontsize=7, xytext=(3, 3),
                    textcoords="offset points")
    for step in script:
        if step["kind"] == "MoveBase":
            (x0, y0, _), (x1, y1, _) = step["base_path"]
            ax.plot([x0, x1], [y0, y1], "-", color="#2060c0", linewidth=1.2)
        elif step["kind"] == "MoveArm":
            w = np.array(step["waypoints"])
            ax.plot(w[:, 0], w[:, 1], "--", color="#602080", linewidth=0.8,
                    alpha=0.7)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"plan for {compiled.instance.name} ({len(action_names)} actions)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_bench(records, prefix) -> list[str]:
    """Two charts next to the delimited output: total time and expansions
    per instance, grouped left to right by task size."""
    labels = [r.instance for r in records]
    x = np.arange(len(records))
    colors = ["#208020" if r.outcome == "solved" else "#b03030"
              for r in records]

    paths = []
    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(records)), 4))
    ax.bar(x, [r.total_time for r in records], color=colors)
    ax.set_xticks(x, labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("total time [s]")
    ax.set_title("time per instance (red: not solved)")
    fig.tight_layout()
    p = f"{prefix}_times.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(records)), 4))
    ax.bar(x, [r.expanded for r in records], color=colors)
    ax.set_xticks(x, labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("expanded states")
    ax.set_title("search effort per instance")
    fig.tight_layout()
    p = f"{prefix}_expansions.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)
    return paths
