"""Geometric surrogate for a one-arm mobile manipulator among tabletop objects.

The end effector is a free-flying point whose motions sweep a sphere of radius
``sweep_radius`` (gripper empty) or ``holding_radius`` (object in hand).
Objects are vertical cylinders resting on axis-aligned rectangular tables.
Arm motions are three-point polylines (rest -> lift via -> target) collision
checked by sampling at a fixed step against cylinder volumes.  All randomness
derives from the scene seed, so every derived artifact is reproducible
bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Sequence

import numpy as np

SCENE_VERSION = 1


def normalize_angle(theta: float) -> float:
    """Wrap into [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class BasePose:
    """Planar robot base placement (x, y, heading)."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))


@dataclass(frozen=True)
class ObjectConfig:
    """A resting object position; z is the cylinder's center height."""

    x: float
    y: float
    z: float

    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ArmConf:
    """End-effector placement in the base frame.  Grasping confs carry the
    yaw pointing at the config they serve; the rest conf has no target."""

    x: float
    y: float
    z: float
    yaw: float = 0.0
    role: str = "grasp"  # "rest" | "grasp"


@dataclass(frozen=True)
class ArmTrajectory:
    """Directed polyline between two arm confs in the base frame."""

    traj_id: str
    source: str
    target: str
    waypoints: tuple[tuple[float, float, float], ...]
    reverse_of: str | None = None

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError(f"trajectory {self.traj_id} needs at least 2 waypoints")


@dataclass(frozen=True)
class TableRect:
    """Axis-aligned table top: closed rectangle [x0,x1] x [y0,y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def distance(self, x: float, y: float) -> float:
        """Euclidean distance to the rectangle (0 inside)."""
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dy = max(self.y0 - y, 0.0, y - self.y1)
        return math.hypot(dx, dy)

    def closest_point(self, x: float, y: float) -> tuple[float, float]:
        return (min(max(x, self.x0), self.x1), min(max(y, self.y0), self.y1))


@dataclass(frozen=True)
class Scene:
    """World description plus all sampling parameters and the master seed.

    ``objects`` is an optional convenience payload (default placements for
    instance tooling); it never affects precompilation and is excluded from
    the geometry hash.
    """

    tables: tuple[TableRect, ...]
    table_height: float = 0.75
    object_radius: float = 0.025
    object_height: float = 0.12
    sweep_radius: float = 0.03
    holding_radius: float = 0.105
    reach_min: float = 0.35
    reach_max: float = 0.95
    standoff: float = 0.07
    rest_forward: float = 0.45
    rest_lift: float = 0.40
    lift_min: float = 0.15
    lift_max: float = 0.35
    sweep_step: float = 0.01
    quantization: float = 0.005
    snap_tolerance: float = 0.02
    virtual_margin: float = 1.1
    band_min: float = 0.40
    band_max: float = 0.70
    n_virtual: int = 15
    n_grasp_angles: int = 4
    n_lifts: int = 4
    n_base_samples: int = 60
    n_base_neighbors: int = 12
    edge_max: float | None = None
    seed: int = 0
    objects: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.tables:
            raise ValueError("scene needs at least one table")
        if self.holding_radius < self.sweep_radius:
            raise ValueError("holding_radius must be >= sweep_radius")
        for name in ("object_radius", "object_height", "sweep_radius", "sweep_step",
                     "quantization", "standoff"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.reach_min < self.reach_max):
            raise ValueError("need 0 < reach_min < reach_max")
        for name in ("n_virtual", "n_grasp_angles", "n_lifts",
                     "n_base_samples", "n_base_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    # -- derived quantities ------------------------------------------------

    @property
    def rest_z(self) -> float:
        return self.table_height + self.rest_lift

    @property
    def resting_conf(self) -> ArmConf:
        return ArmConf(self.rest_forward, 0.0, self.rest_z, 0.0, "rest")

    @property
    def config_z(self) -> float:
        """Center height of an object resting on a table."""
        return self.table_height + self.object_height / 2.0

    @property
    def virtual_half_extent(self) -> float:
        """Half side of the square virtual table around the local origin.
        It exceeds the reachable disc by the configured margin."""
        return self.reach_max * self.virtual_margin

    def within_workspace_xy(self, x: float, y: float) -> bool:
        r = math.hypot(x, y)
        return self.reach_min <= r <= self.reach_max

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "version": SCENE_VERSION,
            "tables": [[t.x0, t.x1, t.y0, t.y1] for t in self.tables],
            "table_height": self.table_height,
            "object": {"radius": self.object_radius, "height": self.object_height},
            "robot": {
                "sweep_radius": self.sweep_radius,
                "holding_radius": self.holding_radius,
                "reach_min": self.reach_min,
                "reach_max": self.reach_max,
                "standoff": self.standoff,
                "rest_forward": self.rest_forward,
                "rest_lift": self.rest_lift,
            },
            "trajectories": {
                "lift_min": self.lift_min,
                "lift_max": self.lift_max,
                "sweep_step": self.sweep_step,
            },
            "discretization": {
                "quantization": self.quantization,
                "snap_tolerance": self.snap_tolerance,
                "virtual_margin": self.virtual_margin,
            },
            "sampling": {
                "band_min": self.band_min,
                "band_max": self.band_max,
                "n_virtual": self.n_virtual,
                "n_grasp_angles": self.n_grasp_angles,
                "n_lifts": self.n_lifts,
                "n_base_samples": self.n_base_samples,
                "n_base_neighbors": self.n_base_neighbors,
                "edge_max": self.edge_max,
            },
            "seed": self.seed,
        }
        if self.objects:
            d["objects"] = [list(p) for p in self.objects]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        if d.get("version") != SCENE_VERSION:
            raise ValueError(f"unsupported scene version {d.get('version')!r}")
        obj, robot = d["object"], d["robot"]
        traj, disc, samp = d["trajectories"], d["discretization"], d["sampling"]
        return cls(
            tables=tuple(TableRect(*t) for t in d["tables"]),
            table_height=d["table_height"],
            object_radius=obj["radius"],
            object_height=obj["height"],
            sweep_radius=robot["sweep_radius"],
            holding_radius=robot["holding_radius"],
            reach_min=robot["reach_min"],
            reach_max=robot["reach_max"],
            standoff=robot["standoff"],
            rest_forward=robot["rest_forward"],
            rest_lift=robot["rest_lift"],
            lift_min=traj["lift_min"],
            lift_max=traj["lift_max"],
            sweep_step=traj["sweep_step"],
            quantization=disc["quantization"],
            snap_tolerance=disc["snap_tolerance"],
            virtual_margin=disc["virtual_margin"],
            band_min=samp["band_min"],
            band_max=samp["band_max"],
            n_virtual=samp["n_virtual"],
            n_grasp_angles=samp["n_grasp_angles"],
            n_lifts=samp["n_lifts"],
            n_base_samples=samp["n_base_samples"],
            n_base_neighbors=samp["n_base_neighbors"],
            edge_max=samp.get("edge_max"),
            seed=d["seed"],
            objects=tuple(tuple(p) for p in d.get("objects", [])),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def geometry_hash(self) -> str:
        """Hash of everything precompilation depends on.  Declared objects are
        deliberately excluded so tables can be shared across instances."""
        d = self.to_dict()
        d.pop("objects", None)
        return hashlib.sha256(canonical_dumps(d).encode()).hexdigest()


def canonical_dumps(data) -> str:
    """Deterministic JSON encoding used for hashing and table caches."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Rigid planar transforms


def transform_to_world(base: BasePose, p: Sequence[float]) -> tuple[float, float, float]:
    """Map a point from the base frame to the world frame.  Standard planar
    rigid motion: rotate by the base heading, then translate; z is preserved."""
    c, s = math.cos(base.theta), math.sin(base.theta)
    x, y = p[0], p[1]
    z = p[2] if len(p) > 2 else 0.0
    return (base.x + x * c - y * s, base.y + x * s + y * c, z)


def transform_to_base(base: BasePose, p: Sequence[float]) -> tuple[float, float, float]:
    """Inverse of :func:`transform_to_world`."""
    c, s = math.cos(base.theta), math.sin(base.theta)
    dx, dy = p[0] - base.x, p[1] - base.y
    z = p[2] if len(p) > 2 else 0.0
    return (dx * c + dy * s, -dx * s + dy * c, z)


def quantize_value(v: float, eps: float) -> float:
    return round(v / eps) * eps


def quantize_cell(p: Sequence[float], eps: float) -> tuple[int, int, float]:
    """Grid cell key of a point: integer cells on (x, y), exact z."""
    return (round(p[0] / eps), round(p[1] / eps), p[2] if len(p) > 2 else 0.0)


def cell_center(cell: tuple[int, int, float], eps: float) -> tuple[float, float, float]:
    return (cell[0] * eps, cell[1] * eps, cell[2])


def quantize_point(p: Sequence[float], eps: float) -> tuple[float, float, float]:
    """Snap a point onto the (x, y) grid of pitch ``eps``; z passes through."""
    return cell_center(quantize_cell(p, eps), eps)


def within_any_table(scene: Scene, p: Sequence[float]) -> bool:
    """True iff (x, y) lies on some table rectangle (closed boundaries)."""
    x, y = p[0], p[1]
    return any(t.contains(x, y) for t in scene.tables)


def within_virtual_table(scene: Scene, p: Sequence[float]) -> bool:
    h = scene.virtual_half_extent
    return -h <= p[0] <= h and -h <= p[1] <= h


# ---------------------------------------------------------------------------
# Polylines and swept-volume collision


def sample_polyline(waypoints: Sequence[Sequence[float]], step: float) -> np.ndarray:
    """Points along a polyline at spacing <= step, endpoints included."""
    pts = [np.asarray(waypoints[0], dtype=float)]
    for a, b in zip(waypoints, waypoints[1:]):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        length = float(np.linalg.norm(b - a))
        n = max(1, math.ceil(length / step))
        for i in range(1, n + 1):
            pts.append(a + (b - a) * (i / n))
    return np.array(pts)


def swept_points_hit(points: np.ndarray, centers: np.ndarray, radius: float,
                     obstacle_radius: float, obstacle_height: float) -> np.ndarray:
    """For each obstacle center (cylinder of given radius/height, center at
    its mid height), report whether any sample point of the swept sphere
    chain intersects it.  Returns a boolean mask over ``centers``."""
    if len(centers) == 0:
        return np.zeros(0, dtype=bool)
    pts = np.asarray(points, dtype=float)
    cts = np.atleast_2d(np.asarray(centers, dtype=float))
    half_h = obstacle_height / 2.0
    reach = radius + obstacle_radius
    dx = pts[:, 0:1] - cts[None, :, 0].reshape(1, -1)
    dy = pts[:, 1:2] - cts[None, :, 1].reshape(1, -1)
    dz = np.abs(pts[:, 2:3] - cts[None, :, 2].reshape(1, -1)) - half_h
    np.clip(dz, 0.0, None, out=dz)
    d2 = dx * dx + dy * dy + dz * dz
    return (d2 <= reach * reach).any(axis=0)


def trajectory_collides(scene: Scene, waypoints: Sequence[Sequence[float]],
                        obstacle: Sequence[float], holding: bool) -> bool:
    """True iff the polyline, sampled at the scene's sweep step and swept with
    the holding or empty-gripper radius, intersects the object cylinder
    resting at ``obstacle``."""
    radius = scene.holding_radius if holding else scene.sweep_radius
    pts = sample_polyline(waypoints, scene.sweep_step)
    hit = swept_points_hit(pts, np.array([list(obstacle)]), radius,
                           scene.object_radius, scene.object_height)
    return bool(hit[0])


# ---------------------------------------------------------------------------
# Arm trajectory shapes


def via_lifts(scene: Scene) -> tuple[float, ...]:
    """The scene's deterministic set of lift heights for via points, drawn
    once from the master seed."""
    rng = np.random.default_rng([scene.seed, 11])
    u = np.sort(rng.random(scene.n_lifts))
    lifts = scene.lift_min + (scene.lift_max - scene.lift_min) * u
    return tuple(float(v) for v in lifts)


def lift_waypoints(scene: Scene, target: Sequence[float], lift: float
                   ) -> tuple[tuple[float, float, float], ...]:
    rest = scene.resting_conf
    via = (target[0], target[1], target[2] + lift)
    return ((rest.x, rest.y, rest.z), via, (target[0], target[1], target[2]))


def polyline_within_workspace(scene: Scene, waypoints, step: float | None = None) -> bool:
    """Sampled points stay inside the horizontal reach annulus and their
    swept sphere clears every table slab."""
    pts = sample_polyline(waypoints, step or scene.sweep_step)
    r = np.hypot(pts[:, 0], pts[:, 1])
    if (r < scene.reach_min - 1e-9).any() or (r > scene.reach_max + 1e-9).any():
        return False
    if (pts[:, 2] - scene.sweep_radius < scene.table_height - 1e-9).any():
        return False
    return True


def plan_arm_trajectories(scene: Scene, target: ArmConf) -> list[tuple[tuple[float, float, float], ...]]:
    """Candidate polylines from the resting conf to ``target``: one per lift
    height, discarding any that leave the workspace annulus or whose sweep
    pierces a table slab.  Waypoint lists start at the resting conf and end at
    the target."""
    if not scene.within_workspace_xy(target.x, target.y):
        return []
    out = []
    for lift in via_lifts(scene):
        wps = lift_waypoints(scene, (target.x, target.y, target.z), lift)
        if polyline_within_workspace(scene, wps):
            out.append(wps)
    return out
