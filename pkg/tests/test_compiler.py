"""Compilation, instance generation, plan validation and plan files."""

import math

import pytest

from ctmpkit.bench import run_instance
from ctmpkit.compiler import (CompileError, CtmpInstance, compile_instance,
                              expand_plan, expected_action_count,
                              generate_instance, load_plan,
                              make_direct_nonoverlap, reachable_configs,
                              save_plan, validate_plan)
from ctmpkit.geometry import transform_to_world
from ctmpkit.tables import DUMMY_TRAJ, HELD_CONF, NOTHING, REST_CONF


def make_instance(tables, n_objects=1, n_goals=1, seed=3, **kw):
    ids = reachable_configs(tables, set(tables.base_poses))
    pts = [tables.real_configs[c] for c in ids]
    objects = {f"obj{i}": pts[i] for i in range(n_objects)}
    goals = {f"obj{i}": pts[n_objects + i] for i in range(n_goals)}
    return CtmpInstance(name="manual", scene_hash=tables.scene_hash,
                        objects=objects, goals=goals, **kw)


@pytest.fixture(scope="module")
def solved(tiny_scene_a, tiny_tables_a):
    """One solved-and-validated single-goal instance on the small scene."""
    inst = generate_instance(tiny_scene_a, tiny_tables_a, 2, 1, seed=3)
    record, plan = run_instance(tiny_scene_a, tiny_tables_a, inst)
    assert record.outcome == "solved" and record.validated
    compiled = compile_instance(tiny_scene_a, tiny_tables_a, inst)
    return inst, compiled, plan


class TestCompile:

    def test_action_count_formula(self, tiny_scene_a, tiny_tables_a):
        t = tiny_tables_a
        for n in (1, 2, 3):
            inst = make_instance(t, n_objects=n)
            compiled = compile_instance(tiny_scene_a, t, inst)
            assert len(compiled.ground.actions) == expected_action_count(t, n)
            assert expected_action_count(t, n) == (
                len(t.base_edges) + len(t.arm_trajectories) + 2 * n)

    def test_action_count_at_scale(self, full_scene, full_tables):
        inst = generate_instance(full_scene, full_tables, 5, 2, seed=21)
        compiled = compile_instance(full_scene, full_tables, inst)
        assert len(compiled.ground.actions) == expected_action_count(
            full_tables, 5)

    def test_schema_inventory(self, tiny_scene_a, tiny_tables_a):
        inst = make_instance(tiny_tables_a, n_objects=2)
        compiled = compile_instance(tiny_scene_a, tiny_tables_a, inst)
        counts = {}
        for a in compiled.ground.actions:
            counts[a.schema] = counts.get(a.schema, 0) + 1
        assert counts == {
            "MoveBase": len(tiny_tables_a.base_edges),
            "MoveArm": len(tiny_tables_a.arm_trajectories),
            "Grasp": 2, "Place": 2,
        }

    def test_initial_state(self, tiny_scene_a, tiny_tables_a):
        inst = make_instance(tiny_tables_a, n_objects=2)
        c = compile_instance(tiny_scene_a, tiny_tables_a, inst)
        v = c.ground.initial.values
        assert v[c.base_slot] == c.init_base
        assert v[c.arm_slot] == REST_CONF
        assert v[c.traj_slot] == DUMMY_TRAJ
        assert v[c.hold_slot] == NOTHING
        for o in c.objects:
            assert v[c.conf_slots[o]] == c.init_conf[o]
        c.ground.check_initial_constraints()

    def test_snap_within_tolerance(self, tiny_scene_a, tiny_tables_a):
        t = tiny_tables_a
        cid = reachable_configs(t, set(t.base_poses))[0]
        x, y, z = t.real_configs[cid]
        inst = CtmpInstance("snap", t.scene_hash,
                            objects={"cup": (x + 0.012, y - 0.009, z)},
                            goals={"cup": t.real_configs[cid]})
        c = compile_instance(tiny_scene_a, t, inst)
        assert c.init_conf["cup"] == cid
        rep = {r["name"]: r for r in c.snap_report if r["kind"] == "object"}
        assert rep["cup"]["config"] == cid
        assert rep["cup"]["distance"] == pytest.approx(math.hypot(0.012, 0.009))

    def test_snap_beyond_tolerance(self, tiny_scene_a, tiny_tables_a):
        t = tiny_tables_a
        cid = reachable_configs(t, set(t.base_poses))[0]
        x, y, z = t.real_configs[cid]
        far = (x + 10.0, y, z)
        inst = make_instance(t)
        inst.objects["obj0"] = far
        with pytest.raises(CompileError, match="snap tolerance"):
            compile_instance(tiny_scene_a, t, inst)

    def test_duplicate_object_configs_rejected(self, tiny_scene_a,
                                               tiny_tables_a):
        t = tiny_tables_a
        cid = reachable_configs(t, set(t.base_poses))[0]
        p = t.real_configs[cid]
        inst = CtmpInstance("dup", t.scene_hash,
                            objects={"a": p, "b": (p[0] + 0.001, p[1], p[2])},
                            goals={})
        with pytest.raises(CompileError, match="same config"):
            compile_instance(tiny_scene_a, t, inst)

    def test_goal_for_unknown_object_rejected(self, tiny_scene_a,
                                              tiny_tables_a):
        inst = make_instance(tiny_tables_a)
        inst.goals["ghost"] = inst.goals["obj0"]
        with pytest.raises(CompileError, match="ghost"):
            compile_instance(tiny_scene_a, tiny_tables_a, inst)

    def test_scene_hash_mismatch_rejected(self, tiny_scene_a, tiny_tables_a):
        inst = make_instance(tiny_tables_a)
        inst.scene_hash = "0" * 16
        with pytest.raises(CompileError, match="different scene"):
            compile_instance(tiny_scene_a, tiny_tables_a, inst)

    def test_empty_instance_rejected(self, tiny_scene_a, tiny_tables_a):
        inst = CtmpInstance("empty", tiny_tables_a.scene_hash, {}, {})
        with pytest.raises(CompileError):
            compile_instance(tiny_scene_a, tiny_tables_a, inst)

    def test_init_base_snapping(self, tiny_scene_a, tiny_tables_a):
        t = tiny_tables_a
        bid = sorted(t.base_poses)[2]
        b = t.base_poses[bid]
        inst = make_instance(t, init_base=(b.x + 0.03, b.y - 0.02, b.theta))
        c = compile_instance(tiny_scene_a, t, inst)
        assert c.init_base == bid
        inst2 = make_instance(t)
        c2 = compile_instance(tiny_scene_a, t, inst2)
        assert c2.init_base == next(iter(t.base_poses))

    def test_goal_atoms_and_counters(self, tiny_scene_a, tiny_tables_a):
        inst = make_instance(tiny_tables_a, n_objects=3, n_goals=2)
        c = compile_instance(tiny_scene_a, tiny_tables_a, inst)
        v = c.ground.initial.values
        assert len(c.goal_atoms) == 2
        assert c.unsatisfied_goals(v) == 2
        done = list(v)
        for slot, want in c.goal_atoms:
            done[slot] = want
        assert c.unsatisfied_goals(tuple(done)) == 0


class TestDirectGeometryRoute:

    def test_tables_agree_with_direct_check(self, tiny_scene_a,
                                            tiny_tables_a):
        """Exhaustive second-scene cross-check of the overlap tables against
        the recomputed swept-volume test."""
        t = tiny_tables_a
        direct = make_direct_nonoverlap(tiny_scene_a, t)
        mismatches = checked = 0
        for b in t.base_poses:
            for tr in t.arm_trajectories:
                for c in t.real_configs:
                    for hold in (NOTHING, "x"):
                        if t.nonoverlap(b, tr, c, hold) != direct(b, tr, c, hold):
                            mismatches += 1
                        checked += 1
        assert checked >= 4 * len(t.arm_trajectories)
        assert mismatches == 0

    def test_direct_check_special_cases(self, tiny_scene_a, tiny_tables_a):
        t = tiny_tables_a
        direct = make_direct_nonoverlap(tiny_scene_a, t)
        b = next(iter(t.base_poses))
        tr = next(iter(t.arm_trajectories))
        c = next(iter(t.real_configs))
        assert direct(b, tr, HELD_CONF, NOTHING)
        assert direct(b, DUMMY_TRAJ, c, NOTHING)

    def test_successor_sets_match_between_routes(self, tiny_scene_a,
                                                 tiny_tables_a):
        """Both compilations (table-backed and direct-geometry safe motion)
        generate the same successors over a few layers of states."""
        inst = make_instance(tiny_tables_a, n_objects=2)
        c1 = compile_instance(tiny_scene_a, tiny_tables_a, inst)
        c2 = compile_instance(
            tiny_scene_a, tiny_tables_a, inst,
            nonoverlap=make_direct_nonoverlap(tiny_scene_a, tiny_tables_a))
        layer1, layer2 = [c1.ground.initial], [c2.ground.initial]
        for _ in range(3):
            next1, next2 = [], []
            for s1, s2 in zip(layer1, layer2):
                succ1 = c1.ground.successors(s1)
                succ2 = c2.ground.successors(s2)
                assert ([(a.name, s.values) for a, s in succ1]
                        == [(a.name, s.values) for a, s in succ2])
                next1 += [s for _, s in succ1]
                next2 += [s for _, s in succ2]
            layer1, layer2 = next1[:20], next2[:20]
            assert layer1


class TestValidator:

    def test_solved_plan_validates(self, tiny_scene_a, tiny_tables_a, solved):
        inst, _, plan = solved
        verdict = validate_plan(tiny_scene_a, tiny_tables_a, inst, plan)
        assert bool(verdict) and verdict.step is None

    def test_truncated_plan_misses_goal(self, tiny_scene_a, tiny_tables_a,
                                        solved):
        inst, _, plan = solved
        verdict = validate_plan(tiny_scene_a, tiny_tables_a, inst, plan[:-1])
        assert not verdict
        assert "goal" in verdict.reason

    def test_inapplicable_step_reported(self, tiny_scene_a, tiny_tables_a,
                                        solved):
        inst, compiled, plan = solved
        first_obj = compiled.objects[0]
        tampered = [f"Place({first_obj})"] + plan
        verdict = validate_plan(tiny_scene_a, tiny_tables_a, inst, tampered)
        assert not verdict and verdict.step == 0
        assert "precondition" in verdict.reason

    def test_unknown_action_reported(self, tiny_scene_a, tiny_tables_a,
                                     solved):
        inst, _, plan = solved
        verdict = validate_plan(tiny_scene_a, tiny_tables_a, inst,
                                plan[:1] + ["Teleport(o1)"] + plan[1:])
        assert not verdict and verdict.step == 1
        assert "unknown action" in verdict.reason

    def test_empty_plan_on_unsatisfied_goal(self, tiny_scene_a,
                                            tiny_tables_a, solved):
        inst, _, _ = solved
        assert not validate_plan(tiny_scene_a, tiny_tables_a, inst, [])


class TestExpandPlan:

    def test_script_structure(self, tiny_tables_a, solved):
        inst, compiled, plan = solved
        script = expand_plan(compiled, plan)
        assert [e["action"] for e in script] == plan
        kinds = {e["kind"] for e in script}
        assert kinds <= {"MoveBase", "MoveArm", "Grasp", "Place"}
        assert "MoveArm" in kinds and "Grasp" in kinds and "Place" in kinds

    def test_move_base_segments(self, tiny_tables_a, solved):
        _, compiled, plan = solved
        t = tiny_tables_a
        for e in expand_plan(compiled, plan):
            if e["kind"] != "MoveBase":
                continue
            edge = e["action"][len("MoveBase("):-1]
            s, d = t.base_edges[edge]
            ps, pd = t.base_poses[s], t.base_poses[d]
            assert e["base_path"] == [[ps.x, ps.y, ps.theta],
                                      [pd.x, pd.y, pd.theta]]

    def test_move_arm_world_waypoints(self, tiny_tables_a, solved):
        _, compiled, plan = solved
        t = tiny_tables_a
        result = compiled.ground.replay(
            [a for n in plan
             for a in compiled.ground.actions if a.name == n])
        script = expand_plan(compiled, plan)
        for e, state in zip(script, result.states[:-1]):
            if e["kind"] != "MoveArm":
                continue
            traj = t.arm_trajectories[e["action"][len("MoveArm("):-1]]
            base = t.base_poses[state.values[compiled.base_slot]]
            assert len(e["waypoints"]) == len(traj.waypoints)
            w0 = transform_to_world(base, traj.waypoints[0])
            assert e["waypoints"][0] == pytest.approx(list(w0))

    def test_grasp_place_name_object(self, solved):
        _, compiled, plan = solved
        for e in expand_plan(compiled, plan):
            if e["kind"] in ("Grasp", "Place"):
                assert e["object"] in compiled.objects

    def test_invalid_plan_rejected(self, solved):
        _, compiled, plan = solved
        with pytest.raises(CompileError, match="invalid plan"):
            expand_plan(compiled, list(reversed(plan)))


class TestGenerateInstance:

    def test_deterministic(self, full_scene, full_tables):
        a = generate_instance(full_scene, full_tables, 6, 2, seed=40)
        b = generate_instance(full_scene, full_tables, 6, 2, seed=40)
        c = generate_instance(full_scene, full_tables, 6, 2, seed=41)
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != c.to_dict()

    def test_shape_and_name(self, full_scene, full_tables):
        inst = generate_instance(full_scene, full_tables, 7, 3, seed=8)
        assert len(inst.objects) == 7 and len(inst.goals) == 3
        assert set(inst.goals) <= set(inst.objects)
        assert inst.name == "inst-s8-o7-g3"
        assert inst.scene_hash == full_tables.scene_hash
        assert inst.init_base is not None

    def test_separation(self, full_scene, full_tables):
        for seed in range(5):
            inst = generate_instance(full_scene, full_tables, 8, 2,
                                     seed=seed)
            pts = list(inst.objects.values()) + list(inst.goals.values())
            for i in range(len(pts)):
                for j in range(i + 1, len(pts)):
                    d = math.hypot(pts[i][0] - pts[j][0],
                                   pts[i][1] - pts[j][1])
                    assert d >= 0.145 - 0.007

    def test_goals_sit_exactly_on_configs(self, full_scene, full_tables):
        inst = generate_instance(full_scene, full_tables, 5, 2, seed=13)
        configs = set(full_tables.real_configs.values())
        for p in inst.goals.values():
            assert tuple(p) in configs
        # objects are jittered off their configs, but only slightly
        for p in inst.objects.values():
            best = min(math.hypot(p[0] - q[0], p[1] - q[1])
                       for q in configs)
            assert 0.0 < best <= 0.005

    def test_uses_largest_component(self, split_scene, split_tables):
        from ctmpkit.compiler import _components
        inst = generate_instance(split_scene, split_tables, 1, 1, seed=2)
        comp_bases = max(_components(split_tables), key=len)
        bx, by = inst.init_base[0], inst.init_base[1]
        match = [b for b in comp_bases
                 if math.hypot(split_tables.base_poses[b].x - bx,
                               split_tables.base_poses[b].y - by) < 1e-9]
        assert match
        ok = set(reachable_configs(split_tables, set(comp_bases)))
        pts = {split_tables.real_configs[c] for c in ok}
        for p in inst.goals.values():
            assert tuple(p) in pts

    def test_more_goals_than_objects(self, full_scene, full_tables):
        with pytest.raises(ValueError):
            generate_instance(full_scene, full_tables, 2, 3, seed=0)


class TestFiles:

    def test_instance_roundtrip(self, full_scene, full_tables, tmp_path):
        inst = generate_instance(full_scene, full_tables, 4, 1, seed=5)
        path = tmp_path / "inst.json"
        inst.save(path)
        again = CtmpInstance.load(path)
        assert again == inst
        inst.save(tmp_path / "b.json")
        assert path.read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_instance_without_base(self, tiny_tables_a, tmp_path):
        inst = make_instance(tiny_tables_a)
        assert inst.init_base is None
        inst.save(tmp_path / "nb.json")
        assert CtmpInstance.load(tmp_path / "nb.json").init_base is None

    def test_plan_roundtrip(self, tiny_scene_a, tiny_tables_a, solved,
                            tmp_path):
        inst, compiled, plan = solved
        script = expand_plan(compiled, plan)
        path = tmp_path / "plan.json"
        save_plan(path, inst, plan, stats={"expanded": 12}, expanded=script)
        data = load_plan(path)
        assert data["actions"] == plan
        assert data["instance"] == inst.name
        assert data["scene_hash"] == inst.scene_hash
        assert data["stats"] == {"expanded": 12}
        assert len(data["expanded"]) == len(plan)
        verdict = validate_plan(tiny_scene_a, tiny_tables_a, inst,
                                data["actions"])
        assert bool(verdict)
