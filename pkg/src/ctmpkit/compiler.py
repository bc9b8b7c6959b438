"""Compile pick-and-place instances into Functional STRIPS problems.

An instance is purely geometric: named objects at world points, goal points
for a subset of them, and an optional initial base pose.  Compilation snaps
every point onto the precompiled config sets and emits a problem over five
fluents (Base, Arm, Traj, Hold and one Conf per object), four schemas
(MoveBase, MoveArm, Grasp, Place) and a per-object safe-motion state
constraint.  All geometry enters through the table lookup procedures, so
grounding and search never touch coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fstrips import (
    ActionSchema, And, Const, ConstraintSchema, Effect, Eq, FluentApp,
    GroundProblem, Holds, Or, Param, ProcApp, Problem, Signature, ground,
)
from .geometry import (
    Scene, canonical_dumps, cell_center, quantize_cell, trajectory_collides,
    transform_to_base, transform_to_world, within_virtual_table,
)
from .tables import (
    DUMMY_TRAJ, HELD_CONF, NOTHING, REST_CONF, PrecompiledTables,
)


class CompileError(Exception):
    pass


@dataclass
class CtmpInstance:
    """A pick-and-place task: world-frame object points, goal points for a
    subset of the objects, and an optional initial base pose."""

    name: str
    scene_hash: str
    objects: dict[str, tuple[float, float, float]]
    goals: dict[str, tuple[float, float, float]]
    init_base: tuple[float, float, float] | None = None

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "scene_hash": self.scene_hash,
            "objects": {k: list(v) for k, v in self.objects.items()},
            "goals": {k: list(v) for k, v in self.goals.items()},
        }
        if self.init_base is not None:
            d["init_base"] = list(self.init_base)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CtmpInstance":
        return cls(
            name=d["name"],
            scene_hash=d["scene_hash"],
            objects={k: tuple(v) for k, v in d["objects"].items()},
            goals={k: tuple(v) for k, v in d["goals"].items()},
            init_base=tuple(d["init_base"]) if d.get("init_base") else None,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(canonical_dumps(self.to_dict()))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CtmpInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CompiledProblem:
    """A ground Functional STRIPS problem plus the bookkeeping the search
    layer needs: variable slots, goal atoms and the snap report."""

    scene: Scene
    tables: PrecompiledTables
    instance: CtmpInstance
    problem: Problem
    ground: GroundProblem
    objects: tuple[str, ...]
    init_conf: dict[str, str]
    goal_conf: dict[str, str]
    init_base: str
    snap_report: list[dict] = field(default_factory=list)

    def __post_init__(self):
        vi = self.ground.var_index
        self.base_slot = vi[("Base", ())]
        self.arm_slot = vi[("Arm", ())]
        self.traj_slot = vi[("Traj", ())]
        self.hold_slot = vi[("Hold", ())]
        self.conf_slots = {o: vi[("Conf", (o,))] for o in self.objects}
        self.goal_atoms = tuple(
            (self.conf_slots[o], c) for o, c in self.goal_conf.items())

    def unsatisfied_goals(self, values: tuple) -> int:
        return sum(1 for slot, want in self.goal_atoms if values[slot] != want)

    def derived_features(self, values: tuple) -> tuple:
        """Extra boolean atoms for novelty pruning: per object, whether it
        could be grasped right here, and whether it is held with a free
        placement pose under the gripper."""
        pose = self.tables.pose(values[self.base_slot], values[self.arm_slot])
        hold = values[self.hold_slot]
        out = []
        for o in self.objects:
            conf = values[self.conf_slots[o]]
            out.append(hold == NOTHING and pose is not None and conf == pose)
            out.append(hold == o and pose is not None)
        return tuple(out)


def _snap_points(tables: PrecompiledTables, scene: Scene,
                 points: dict[str, tuple], kind: str) -> tuple[dict, list]:
    ids = list(tables.real_configs)
    arr = np.array([tables.real_configs[c] for c in ids], dtype=float)
    snapped, report = {}, []
    for name, p in points.items():
        d = np.linalg.norm(arr - np.asarray(p, dtype=float), axis=1)
        i = int(np.argmin(d))
        if d[i] > scene.snap_tolerance:
            raise CompileError(
                f"{kind} point for {name} is {d[i]:.3f} m from the nearest "
                f"config, beyond the {scene.snap_tolerance} m snap tolerance")
        snapped[name] = ids[i]
        report.append({"kind": kind, "name": name, "config": ids[i],
                       "distance": float(d[i])})
    return snapped, report


def _snap_base(tables: PrecompiledTables, pose) -> str:
    best, best_d = None, math.inf
    for bid, b in tables.base_poses.items():
        d = math.hypot(b.x - pose[0], b.y - pose[1])
        if d < best_d:
            best, best_d = bid, d
    return best


def compile_instance(scene: Scene, tables: PrecompiledTables,
                     instance: CtmpInstance, nonoverlap=None) -> CompiledProblem:
    """Build and ground the planning problem for one instance.  ``nonoverlap``
    optionally replaces the table-backed safe-motion procedure (the validator
    passes a direct geometric check)."""
    if instance.scene_hash != tables.scene_hash:
        raise CompileError("instance was generated for a different scene")
    if not instance.objects:
        raise CompileError("instance has no objects")
    for o in instance.goals:
        if o not in instance.objects:
            raise CompileError(f"goal object {o} is not in the instance")

    objs = list(instance.objects)
    init_conf, report = _snap_points(tables, scene, instance.objects, "object")
    if len(set(init_conf.values())) != len(init_conf):
        raise CompileError("two objects snapped to the same config")
    goal_conf, greport = _snap_points(tables, scene, instance.goals, "goal")
    if len(set(goal_conf.values())) != len(goal_conf):
        raise CompileError("two goals snapped to the same config")
    report.extend(greport)
    if instance.init_base is not None:
        b0 = _snap_base(tables, instance.init_base)
    else:
        b0 = next(iter(tables.base_poses))

    sig = Signature()
    sig.add_type("obj", objs)
    sig.add_type("base", list(tables.base_poses))
    sig.add_type("aconf", list(tables.arm_confs))
    sig.add_type("traj", [DUMMY_TRAJ] + list(tables.arm_trajectories))
    sig.add_type("conf", list(tables.real_configs) + [HELD_CONF])
    sig.add_type("holdv", objs + [NOTHING])
    if tables.base_edges:
        sig.add_type("bedge", list(tables.base_edges))
    if tables.arm_trajectories:
        sig.add_type("mtraj", list(tables.arm_trajectories))

    sig.add_fluent("Base", [], "base")
    sig.add_fluent("Arm", [], "aconf")
    sig.add_fluent("Traj", [], "traj")
    sig.add_fluent("Hold", [], "holdv")
    sig.add_fluent("Conf", ["obj"], "conf")
    for p in ("@source-b", "@target-b", "@source-a", "@target-a",
              "@graspable", "@placeable", "@place", "@non-overlap"):
        sig.add_procedure(p)

    base_f = FluentApp("Base", [])
    arm_f = FluentApp("Arm", [])
    traj_f = FluentApp("Traj", [])
    hold_f = FluentApp("Hold", [])

    schemas = []
    if tables.base_edges:
        e = Param("?e", "bedge")
        schemas.append(ActionSchema(
            "MoveBase", (("?e", "bedge"),),
            And([Eq(arm_f, Const(REST_CONF)),
                 Eq(base_f, ProcApp("@source-b", [e]))]),
            (Effect(base_f, ProcApp("@target-b", [e])),)))
    if tables.arm_trajectories:
        t = Param("?t", "mtraj")
        target = ProcApp("@target-a", [t])
        schemas.append(ActionSchema(
            "MoveArm", (("?t", "mtraj"),),
            And([Eq(arm_f, ProcApp("@source-a", [t])),
                 Or([Eq(target, Const(REST_CONF)),
                     Holds(ProcApp("@placeable", [base_f, target]))])]),
            (Effect(arm_f, target), Effect(traj_f, t))))
    o = Param("?o", "obj")
    conf_o = FluentApp("Conf", [o])
    schemas.append(ActionSchema(
        "Grasp", (("?o", "obj"),),
        And([Eq(hold_f, Const(NOTHING)),
             Holds(ProcApp("@graspable", [base_f, arm_f, conf_o]))]),
        (Effect(hold_f, o), Effect(conf_o, Const(HELD_CONF)))))
    schemas.append(ActionSchema(
        "Place", (("?o", "obj"),),
        And([Eq(hold_f, o),
             Holds(ProcApp("@placeable", [base_f, arm_f]))]),
        (Effect(hold_f, Const(NOTHING)),
         Effect(conf_o, ProcApp("@place", [base_f, arm_f])))))

    constraint = ConstraintSchema(
        "safe-motion", (("?o", "obj"),),
        Holds(ProcApp("@non-overlap", [base_f, traj_f, conf_o, hold_f])))

    init = {("Base", ()): b0, ("Arm", ()): REST_CONF,
            ("Traj", ()): DUMMY_TRAJ, ("Hold", ()): NOTHING}
    for obj in objs:
        init[("Conf", (obj,))] = init_conf[obj]

    goal = And([Eq(FluentApp("Conf", [Const(obj)]), Const(goal_conf[obj]))
                for obj in instance.goals])

    registry = tables.planner_registry()
    if nonoverlap is not None:
        registry["@non-overlap"] = nonoverlap

    problem = Problem(
        name=instance.name, signature=sig, schemas=tuple(schemas),
        constraints=(constraint,), init=init, goal=goal, registry=registry)
    gp = ground(problem)
    return CompiledProblem(
        scene=scene, tables=tables, instance=instance, problem=problem,
        ground=gp, objects=tuple(objs), init_conf=init_conf,
        goal_conf=goal_conf, init_base=b0, snap_report=report)


def expected_action_count(tables: PrecompiledTables, n_objects: int) -> int:
    """Ground size by counting: one action per directed base edge, one per
    directed trajectory, and a grasp and a place per object."""
    return len(tables.base_edges) + len(tables.arm_trajectories) + 2 * n_objects


# ---------------------------------------------------------------------------
# Instance generation


def _components(tables: PrecompiledTables) -> list[set[str]]:
    adj: dict[str, set[str]] = {b: set() for b in tables.base_poses}
    for s, t in tables.base_edges.values():
        adj[s].add(t)
        adj[t].add(s)
    seen, comps = set(), []
    for b in tables.base_poses:
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


def reachable_configs(tables: PrecompiledTables, bases: set[str]) -> list[str]:
    """Real configs with at least one grasping pose from the given bases."""
    return sorted(c for c, pairs in tables.placement_index().items()
                  if any(b in bases for b, _ in pairs))


def generate_instance(scene: Scene, tables: PrecompiledTables,
                      n_objects: int, n_goals: int, seed: int,
                      name: str | None = None,
                      min_sep: float = 0.145,
                      goal_sep: float = 0.15) -> CtmpInstance:
    """Sample a solvable-looking instance: objects and goals at reachable
    configs with enough clearance that grasp approaches are not all blocked,
    plus a small jitter on object points to exercise snapping."""
    if n_goals > n_objects:
        raise ValueError("more goals than objects")
    rng = np.random.default_rng(seed)
    comps = _components(tables)
    comp = max(comps, key=lambda c: (len(c), -ord(min(c)[0])))
    candidates = reachable_configs(tables, comp)

    def pick(pool, count, chosen, sep):
        got = []
        for cid in pool:
            p = tables.real_configs[cid]
            if all(math.hypot(p[0] - q[0], p[1] - q[1]) >= sep
                   for q in chosen):
                got.append(cid)
                chosen.append(p)
                if len(got) == count:
                    return got
        raise CompileError(
            f"could not fit {count} configs at {sep} m separation; "
            "use a larger scene or fewer objects")

    pool = list(candidates)
    rng.shuffle(pool)
    placed: list[tuple] = []
    init_ids = pick(pool, n_objects, placed, min_sep)
    goal_pool = [c for c in pool if c not in set(init_ids)]
    goal_ids = pick(goal_pool, n_goals, placed, goal_sep)

    width = max(2, len(str(n_objects)))
    objs = [f"o{i:0{width}d}" for i in range(1, n_objects + 1)]
    goal_objs = sorted(rng.choice(objs, size=n_goals, replace=False).tolist())

    objects = {}
    for obj, cid in zip(objs, init_ids):
        p = tables.real_configs[cid]
        jx, jy = rng.uniform(-0.003, 0.003, size=2)
        objects[obj] = (p[0] + float(jx), p[1] + float(jy), p[2])
    goals = {obj: tables.real_configs[cid]
             for obj, cid in zip(goal_objs, goal_ids)}

    b0 = sorted(comp)[int(rng.integers(len(comp)))]
    bp = tables.base_poses[b0]
    return CtmpInstance(
        name=name or f"inst-s{seed}-o{n_objects}-g{n_goals}",
        scene_hash=tables.scene_hash,
        objects=objects, goals=goals, init_base=(bp.x, bp.y, bp.theta))


# ---------------------------------------------------------------------------
# Validation against direct geometry


@dataclass
class Verdict:
    ok: bool
    reason: str = ""
    step: int | None = None

    def __bool__(self):
        return self.ok


def make_direct_nonoverlap(scene: Scene, tables: PrecompiledTables):
    """Safe-motion check recomputed from geometry instead of the overlap
    tables: same quantized base-frame point, fresh swept-volume test."""
    def check(base_id, traj_id, conf_id, hold):
        if conf_id == HELD_CONF or traj_id == DUMMY_TRAJ:
            return True
        base = tables.base_poses[base_id]
        local = transform_to_base(base, tables.real_configs[conf_id])
        pt = cell_center(quantize_cell(local, scene.quantization),
                         scene.quantization)
        if not within_virtual_table(scene, pt):
            return True
        traj = tables.arm_trajectories[traj_id]
        return not trajectory_collides(scene, traj.waypoints, pt,
                                       holding=hold != NOTHING)
    return check


def validate_plan(scene: Scene, tables: PrecompiledTables,
                  instance: CtmpInstance, action_names: list[str]) -> Verdict:
    """Replay a plan under an independently compiled problem whose
    safe-motion constraint is evaluated by direct geometry."""
    try:
        compiled = compile_instance(
            scene, tables, instance,
            nonoverlap=make_direct_nonoverlap(scene, tables))
    except CompileError as e:
        return Verdict(False, f"compile: {e}")
    by_name = {a.name: a for a in compiled.ground.actions}
    actions = []
    for i, name in enumerate(action_names):
        a = by_name.get(name)
        if a is None:
            return Verdict(False, f"unknown action {name!r}", step=i)
        actions.append(a)
    result = compiled.ground.replay(actions)
    if result.failed_step is not None:
        return Verdict(False, result.reason, step=result.failed_step)
    if not result.goal_satisfied:
        return Verdict(False, "plan does not reach the goal")
    return Verdict(True, "plan valid")


# ---------------------------------------------------------------------------
# Plan expansion and plan files


def expand_plan(compiled: CompiledProblem, action_names: list[str]) -> list[dict]:
    """Turn a symbolic plan into a motion script: world-frame base segments
    and world-frame arm waypoint polylines."""
    by_name = {a.name: a for a in compiled.ground.actions}
    actions = [by_name[n] for n in action_names]
    result = compiled.ground.replay(actions)
    if not result.valid:
        raise CompileError(f"cannot expand invalid plan: {result.reason}")
    script = []
    tables = compiled.tables
    for act, state in zip(actions, result.states[:-1]):
        entry = {"action": act.name, "kind": act.schema}
        if act.schema == "MoveBase":
            s, t = tables.base_edges[act.args[0]]
            ps, pt = tables.base_poses[s], tables.base_poses[t]
            entry["base_path"] = [[ps.x, ps.y, ps.theta], [pt.x, pt.y, pt.theta]]
        elif act.schema == "MoveArm":
            traj = tables.arm_trajectories[act.args[0]]
            base = tables.base_poses[state.values[compiled.base_slot]]
            entry["waypoints"] = [list(transform_to_world(base, w))
                                  for w in traj.waypoints]
        else:
            obj = act.args[0]
            entry["object"] = obj
        script.append(entry)
    return script


def save_plan(path, instance: CtmpInstance, action_names: list[str],
              stats: dict | None = None, expanded: list[dict] | None = None) -> None:
    payload = {
        "instance": instance.name,
        "scene_hash": instance.scene_hash,
        "actions": list(action_names),
    }
    if stats:
        payload["stats"] = stats
    if expanded is not None:
        payload["expanded"] = expanded
    with open(path, "w") as fh:
        fh.write(canonical_dumps(payload))
        fh.write("\n")


def load_plan(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
