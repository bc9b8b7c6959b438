"""Precompilation of all geometric reasoning into lookup tables.

Everything a planner needs at run time is derived here, once per scene, in a
local frame around a virtual base at the origin: a virtual table with a grid
of virtual object configs, grasp poses and lift trajectories for each config,
a sampled base graph around the real tables, the induced real (world) and
relative (base-frame) config sets, and two trajectory/config overlap tables
(gripper empty and holding).  Plan-time geometry then reduces to constant
time lookups.  Builds are deterministic: same scene and seed, same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import (
    ArmConf, ArmTrajectory, BasePose, Scene, canonical_dumps, cell_center,
    plan_arm_trajectories, quantize_cell, sample_polyline, swept_points_hit,
    transform_to_base, transform_to_world, within_any_table,
    within_virtual_table,
)

TABLES_VERSION = 1

REST_CONF = "ca0"       # the arm's single resting conf
HELD_CONF = "c-held"    # pseudo config of the object in the gripper
DUMMY_TRAJ = "t-dummy"  # initial trajectory id; never collides
NOTHING = "none"        # gripper-empty value of the hold variable


class ScanCounter:
    """Counts batched collision scans during overlap-table construction."""

    def __init__(self):
        self.count = 0

    def tick(self):
        self.count += 1


def _grid_shape(d: int) -> tuple[int, int]:
    """Factor d into rows x cols as close to square as possible."""
    best = (1, d)
    for r in range(1, int(math.isqrt(d)) + 1):
        if d % r == 0:
            best = (r, d // r)
    return best


def build_virtual_configs(scene: Scene) -> dict[str, tuple[float, float, float]]:
    """Regular rows x cols grid of cell centers over the virtual table,
    exactly ``n_virtual`` points before any pruning."""
    rows, cols = _grid_shape(scene.n_virtual)
    h = scene.virtual_half_extent
    z = scene.config_z
    out = {}
    width = max(2, len(str(scene.n_virtual)))
    i = 0
    for r in range(rows):
        y = -h + (r + 0.5) * (2.0 * h / rows)
        for c in range(cols):
            x = -h + (c + 0.5) * (2.0 * h / cols)
            i += 1
            out[f"v{i:0{width}d}"] = (x, y, z)
    return out


def build_grasp_poses(scene: Scene, vconf: Sequence[float]) -> list[ArmConf]:
    """``n_grasp_angles`` poses on the standoff circle around a virtual
    config, each yawed to face it."""
    poses = []
    for j in range(scene.n_grasp_angles):
        phi = 2.0 * math.pi * j / scene.n_grasp_angles
        x = vconf[0] + scene.standoff * math.cos(phi)
        y = vconf[1] + scene.standoff * math.sin(phi)
        yaw = math.atan2(vconf[1] - y, vconf[0] - x)
        poses.append(ArmConf(x, y, vconf[2], yaw, "grasp"))
    return poses


@dataclass
class ArmGraph:
    confs: dict[str, ArmConf]
    trajectories: dict[str, ArmTrajectory]


@dataclass
class BaseGraph:
    poses: dict[str, BasePose]
    edges: dict[str, tuple[str, str]]  # directed

    def components(self) -> list[set[str]]:
        adj: dict[str, set[str]] = {b: set() for b in self.poses}
        for s, t in self.edges.values():
            adj[s].add(t)
            adj[t].add(s)
        seen, comps = set(), []
        for b in self.poses:
            if b in seen:
                continue
            comp, stack = {b}, [b]
            while stack:
                for n in adj[stack.pop()]:
                    if n not in comp:
                        comp.add(n)
                        stack.append(n)
            seen |= comp
            comps.append(comp)
        return comps


def build_arm_graph(scene: Scene, virtual_configs: dict[str, tuple]
                    ) -> tuple[ArmGraph, dict[str, str], dict[str, tuple]]:
    """Grasp-pose nodes plus directed lift trajectories from the resting conf,
    with the reversed twin of every trajectory.  Poses with no surviving
    trajectory are dropped, then virtual configs with no surviving pose.
    Returns (graph, pose id -> virtual config id, surviving virtual configs).
    """
    survivors: list[tuple[str, ArmConf, list]] = []
    for vid, vpt in virtual_configs.items():
        for pose in build_grasp_poses(scene, vpt):
            trajs = plan_arm_trajectories(scene, pose)
            if trajs:
                survivors.append((vid, pose, trajs))

    confs: dict[str, ArmConf] = {REST_CONF: scene.resting_conf}
    vplace: dict[str, str] = {}
    kept_vids: list[str] = []
    pose_width = max(2, len(str(len(survivors))))
    forward: list[ArmTrajectory] = []
    for n, (vid, pose, trajs) in enumerate(survivors, start=1):
        aid = f"a{n:0{pose_width}d}"
        confs[aid] = pose
        vplace[aid] = vid
        if vid not in kept_vids:
            kept_vids.append(vid)
        for wps in trajs:
            forward.append(ArmTrajectory(
                traj_id="", source=REST_CONF, target=aid, waypoints=wps))

    traj_width = max(3, len(str(len(forward))))
    trajectories: dict[str, ArmTrajectory] = {}
    for n, t in enumerate(forward, start=1):
        tid = f"t{n:0{traj_width}d}"
        trajectories[tid] = ArmTrajectory(tid, t.source, t.target, t.waypoints)
        rid = tid + "r"
        trajectories[rid] = ArmTrajectory(
            rid, t.target, t.source, tuple(reversed(t.waypoints)), reverse_of=tid)

    kept = {vid: virtual_configs[vid] for vid in virtual_configs if vid in set(kept_vids)}
    return ArmGraph(confs, trajectories), vplace, kept


def build_base_graph(scene: Scene) -> BaseGraph:
    """``n_base_samples`` seeded poses in the band around the table edges,
    each facing the nearest edge point, joined to their nearest neighbors."""
    rng = np.random.default_rng([scene.seed, 23])
    pad = scene.band_max + 0.05
    x0 = min(t.x0 for t in scene.tables) - pad
    x1 = max(t.x1 for t in scene.tables) + pad
    y0 = min(t.y0 for t in scene.tables) - pad
    y1 = max(t.y1 for t in scene.tables) + pad

    poses: list[BasePose] = []
    attempts = 0
    limit = 20000 * scene.n_base_samples
    while len(poses) < scene.n_base_samples:
        attempts += 1
        if attempts > limit:
            raise RuntimeError("base sampling band appears empty; check scene geometry")
        x = float(x0 + (x1 - x0) * rng.random())
        y = float(y0 + (y1 - y0) * rng.random())
        table = min(scene.tables, key=lambda t: t.distance(x, y))
        d = table.distance(x, y)
        if not (scene.band_min <= d <= scene.band_max):
            continue
        cx, cy = table.closest_point(x, y)
        poses.append(BasePose(x, y, math.atan2(cy - y, cx - x)))

    width = max(2, len(str(len(poses))))
    ids = [f"b{i:0{width}d}" for i in range(1, len(poses) + 1)]
    pose_map = dict(zip(ids, poses))

    pairs: set[tuple[int, int]] = set()
    if len(poses) > 1:
        xy = np.array([[p.x, p.y] for p in poses])
        d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        cutoff = math.inf if scene.edge_max is None else scene.edge_max ** 2
        k = min(scene.n_base_neighbors, len(poses) - 1)
        for i in range(len(poses)):
            order = np.argsort(d2[i], kind="stable")[:k]
            for j in order:
                if d2[i, int(j)] <= cutoff:
                    pairs.add((min(i, int(j)), max(i, int(j))))

    directed = []
    for i, j in sorted(pairs):
        directed.append((ids[i], ids[j]))
        directed.append((ids[j], ids[i]))
    ewidth = max(3, len(str(len(directed))))
    edges = {f"e{n:0{ewidth}d}": st for n, st in enumerate(directed, start=1)}
    return BaseGraph(pose_map, edges)


def build_real_configs(scene: Scene, base_graph: BaseGraph,
                       virtual_configs: dict[str, tuple]) -> dict[str, tuple]:
    """World-frame object configs: every virtual config seen from every base,
    snapped to the quantization grid, kept when the snapped point lies on a
    table.  Duplicates collapse to the first id."""
    cells: dict[tuple, str] = {}
    points: dict[str, tuple] = {}
    eps = scene.quantization
    n = 0
    width = max(3, len(str(len(base_graph.poses) * max(1, len(virtual_configs)))))
    for base in base_graph.poses.values():
        for vpt in virtual_configs.values():
            world = transform_to_world(base, vpt)
            cell = quantize_cell(world, eps)
            if cell in cells:
                continue
            snapped = cell_center(cell, eps)
            if not within_any_table(scene, snapped):
                continue
            n += 1
            cid = f"c{n:0{width}d}"
            cells[cell] = cid
            points[cid] = snapped
    return points


def build_relative_configs(scene: Scene, base_graph: BaseGraph,
                           real_configs: dict[str, tuple]) -> dict[str, tuple]:
    """Base-frame views of every real config from every base, snapped to the
    quantization grid and pruned to the virtual table."""
    cells: dict[tuple, str] = {}
    points: dict[str, tuple] = {}
    eps = scene.quantization
    n = 0
    width = max(4, len(str(len(base_graph.poses) * max(1, len(real_configs)))))
    for base in base_graph.poses.values():
        for cpt in real_configs.values():
            local = transform_to_base(base, cpt)
            cell = quantize_cell(local, eps)
            if cell in cells:
                continue
            snapped = cell_center(cell, eps)
            if not within_virtual_table(scene, snapped):
                continue
            n += 1
            rid = f"r{n:0{width}d}"
            cells[cell] = rid
            points[rid] = snapped
    return points


def build_overlap_tables(scene: Scene, arm_graph: ArmGraph,
                         relative_configs: dict[str, tuple],
                         counter: ScanCounter | None = None
                         ) -> tuple[dict[str, tuple[str, ...]], dict[str, tuple[str, ...]], int]:
    """For every trajectory, the relative configs its swept volume would hit:
    once with the empty-gripper radius, once with the holding radius.  Exactly
    two batched scans per trajectory.  Returns (empty table, holding table,
    scan count)."""
    counter = counter or ScanCounter()
    rel_ids = list(relative_configs)
    centers = np.array([relative_configs[r] for r in rel_ids], dtype=float).reshape(-1, 3)
    empty: dict[str, tuple[str, ...]] = {}
    holding: dict[str, tuple[str, ...]] = {}
    for tid, traj in arm_graph.trajectories.items():
        pts = sample_polyline(traj.waypoints, scene.sweep_step)
        mask = swept_points_hit(pts, centers, scene.sweep_radius,
                                scene.object_radius, scene.object_height)
        counter.tick()
        empty[tid] = tuple(r for r, hit in zip(rel_ids, mask) if hit)
        mask = swept_points_hit(pts, centers, scene.holding_radius,
                                scene.object_radius, scene.object_height)
        counter.tick()
        holding[tid] = tuple(r for r, hit in zip(rel_ids, mask) if hit)
    return empty, holding, counter.count


@dataclass
class PrecompiledTables:
    """Everything the compiler and planner look up at run time."""

    scene_hash: str
    virtual_configs: dict[str, tuple]
    arm_confs: dict[str, ArmConf]
    arm_trajectories: dict[str, ArmTrajectory]
    vplace: dict[str, str]
    base_poses: dict[str, BasePose]
    base_edges: dict[str, tuple[str, str]]
    real_configs: dict[str, tuple]
    relative_configs: dict[str, tuple]
    overlap_empty: dict[str, tuple[str, ...]]
    overlap_holding: dict[str, tuple[str, ...]]
    scan_count: int = 0

    def __post_init__(self):
        self._finalize()

    def _finalize(self):
        self._rel_cells: dict[tuple, str] = {}
        self._eps = None  # set via attach_scene
        self._empty_sets = {t: frozenset(v) for t, v in self.overlap_empty.items()}
        self._holding_sets = {t: frozenset(v) for t, v in self.overlap_holding.items()}
        self._pair_rel: dict[tuple[str, str], str | None] = {}
        self._pose_map: dict[tuple[str, str], str | None] = {}

    def attach_scene(self, scene: Scene) -> "PrecompiledTables":
        """Bind the runtime lookup maps that depend on scene parameters
        (quantization pitch).  Derived deterministically, so they are not
        serialized."""
        if scene.geometry_hash() != self.scene_hash:
            raise ValueError("tables were precompiled for a different scene")
        eps = scene.quantization
        self._eps = eps
        real_cells = {quantize_cell(p, eps): c for c, p in self.real_configs.items()}
        self._rel_cells = {quantize_cell(p, eps): r for r, p in self.relative_configs.items()}
        for bid, base in self.base_poses.items():
            for cid, cpt in self.real_configs.items():
                cell = quantize_cell(transform_to_base(base, cpt), eps)
                self._pair_rel[(bid, cid)] = self._rel_cells.get(cell)
            for aid in self.arm_confs:
                vid = self.vplace.get(aid)
                if vid is None:
                    self._pose_map[(bid, aid)] = None
                    continue
                cell = quantize_cell(transform_to_world(base, self.virtual_configs[vid]), eps)
                self._pose_map[(bid, aid)] = real_cells.get(cell)
        return self

    # -- plan-time lookups (constant time) --------------------------------

    def pose(self, base_id: str, arm_id: str) -> str | None:
        """Real config id where an object held at this base/arm pair would
        land, or None when that point is off every table."""
        return self._pose_map.get((base_id, arm_id))

    def graspable(self, base_id: str, arm_id: str, conf_id) -> bool:
        p = self._pose_map.get((base_id, arm_id))
        return p is not None and p == conf_id

    def placeable(self, base_id: str, arm_id: str) -> bool:
        return self._pose_map.get((base_id, arm_id)) is not None

    def relative_id(self, base_id: str, conf_id: str) -> str | None:
        return self._pair_rel.get((base_id, conf_id))

    def overlap_row(self, traj_id: str, holding: bool) -> frozenset:
        """Relative configs swept by a trajectory at the radius implied by
        the gripper state."""
        table = self._holding_sets if holding else self._empty_sets
        return table[traj_id]

    def placement_index(self) -> dict[str, list[tuple[str, str]]]:
        """Real config -> (base, arm conf) pairs whose grasp point lands
        there, in sorted order."""
        out: dict[str, list[tuple[str, str]]] = {}
        for (b, a), c in sorted(self._pose_map.items()):
            if c is not None:
                out.setdefault(c, []).append((b, a))
        return out

    def nonoverlap(self, base_id, traj_id, conf_id, hold) -> bool:
        """True iff the last arm motion cannot have collided with an object
        at ``conf_id``: held objects, the dummy initial trajectory and
        out-of-reach relative configs are always safe."""
        if conf_id == HELD_CONF or traj_id == DUMMY_TRAJ:
            return True
        rel = self._pair_rel.get((base_id, conf_id))
        if rel is None:
            return True
        row = (self._holding_sets if hold != NOTHING else self._empty_sets).get(traj_id)
        return row is None or rel not in row

    def planner_registry(self) -> dict:
        """Procedure bindings for compiled problems."""
        src = {e: st[0] for e, st in self.base_edges.items()}
        tgt = {e: st[1] for e, st in self.base_edges.items()}
        asrc = {t: tr.source for t, tr in self.arm_trajectories.items()}
        atgt = {t: tr.target for t, tr in self.arm_trajectories.items()}
        return {
            "@source-b": src.__getitem__,
            "@target-b": tgt.__getitem__,
            "@source-a": asrc.__getitem__,
            "@target-a": atgt.__getitem__,
            "@graspable": self.graspable,
            "@placeable": self.placeable,
            "@place": self._place,
            "@non-overlap": self.nonoverlap,
        }

    def _place(self, base_id: str, arm_id: str) -> str:
        p = self._pose_map.get((base_id, arm_id))
        if p is None:
            raise KeyError(f"placement pose undefined for ({base_id}, {arm_id})")
        return p

    # -- reporting ---------------------------------------------------------

    def summary(self, scene: Scene) -> dict:
        n_arm = len(self.arm_confs)
        n_base = len(self.base_poses)
        return {
            "tables": len(scene.tables),
            "trajectories": len(self.arm_trajectories),
            "arm_confs": n_arm,
            "base_confs": n_base,
            "total_confs": n_arm * n_base,
            "virtual_confs": len(self.virtual_configs),
            "virtual_grasp_poses": n_arm - 1,
            "relative_confs": len(self.relative_configs),
            "real_confs": len(self.real_configs),
        }

    # -- serialization -----------------------------------------------------

    def to_payload(self) -> dict:
        return {
            "version": TABLES_VERSION,
            "scene_hash": self.scene_hash,
            "virtual_configs": {k: list(v) for k, v in self.virtual_configs.items()},
            "arm_confs": {
                k: [a.x, a.y, a.z, a.yaw, a.role] for k, a in self.arm_confs.items()},
            "arm_trajectories": {
                k: {
                    "source": t.source,
                    "target": t.target,
                    "waypoints": [list(w) for w in t.waypoints],
                    "reverse_of": t.reverse_of,
                } for k, t in self.arm_trajectories.items()},
            "vplace": self.vplace,
            "base_poses": {k: [b.x, b.y, b.theta] for k, b in self.base_poses.items()},
            "base_edges": {k: list(v) for k, v in self.base_edges.items()},
            "real_configs": {k: list(v) for k, v in self.real_configs.items()},
            "relative_configs": {k: list(v) for k, v in self.relative_configs.items()},
            "overlap_empty": {k: list(v) for k, v in self.overlap_empty.items()},
            "overlap_holding": {k: list(v) for k, v in self.overlap_holding.items()},
            "scan_count": self.scan_count,
        }

    @classmethod
    def from_payload(cls, d: dict) -> "PrecompiledTables":
        if d.get("version") != TABLES_VERSION:
            raise ValueError(f"unsupported tables version {d.get('version')!r}")
        return cls(
            scene_hash=d["scene_hash"],
            virtual_configs={k: tuple(v) for k, v in d["virtual_configs"].items()},
            arm_confs={k: ArmConf(*v) for k, v in d["arm_confs"].items()},
            arm_trajectories={
                k: ArmTrajectory(k, t["source"], t["target"],
                                 tuple(tuple(w) for w in t["waypoints"]),
                                 t.get("reverse_of"))
                for k, t in d["arm_trajectories"].items()},
            vplace=dict(d["vplace"]),
            base_poses={k: BasePose(*v) for k, v in d["base_poses"].items()},
            base_edges={k: tuple(v) for k, v in d["base_edges"].items()},
            real_configs={k: tuple(v) for k, v in d["real_configs"].items()},
            relative_configs={k: tuple(v) for k, v in d["relative_configs"].items()},
            overlap_empty={k: tuple(v) for k, v in d["overlap_empty"].items()},
            overlap_holding={k: tuple(v) for k, v in d["overlap_holding"].items()},
            scan_count=d.get("scan_count", 0),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(canonical_dumps(self.to_payload()))
            fh.write("\n")

    @classmethod
    def load(cls, path, scene: Scene | None = None) -> "PrecompiledTables":
        with open(path) as fh:
            tables = cls.from_payload(json.load(fh))
        if scene is not None:
            tables.attach_scene(scene)
        return tables


def build_tables(scene: Scene, counter: ScanCounter | None = None) -> PrecompiledTables:
    """Run the whole precompilation pipeline for one scene."""
    virtual = build_virtual_configs(scene)
    arm_graph, vplace, kept_virtual = build_arm_graph(scene, virtual)
    base_graph = build_base_graph(scene)
    real = build_real_configs(scene, base_graph, kept_virtual)
    relative = build_relative_configs(scene, base_graph, real)
    empty, holding, scans = build_overlap_tables(scene, arm_graph, relative, counter)
    tables = PrecompiledTables(
        scene_hash=scene.geometry_hash(),
        virtual_configs=kept_virtual,
        arm_confs=arm_graph.confs,
        arm_trajectories=arm_graph.trajectories,
        vplace=vplace,
        base_poses=base_graph.poses,
        base_edges=base_graph.edges,
        real_configs=real,
        relative_configs=relative,
        overlap_empty=empty,
        overlap_holding=holding,
        scan_count=scans,
    )
    return tables.attach_scene(scene)
