"""Semantics and parser tests for the planning core."""

import random

import pytest

from ctmpkit.fstrips import (
    ConstraintViolation, EffectConflictError, EvaluationError, FstripsError,
    ParseError, parse_problem, ground,
)

COUNTER = """
(define (problem counter)
  (:types (count 0 1 2 3 4 5))
  (:fluents (X () count) (Y () count))
  (:action bump
    :parameters ()
    :prec (and)
    :eff (:= X (+ X 1)))
  (:action swap
    :parameters ()
    :prec (and)
    :eff (and (:= X Y) (:= Y X)))
  (:init (= X 2) (= Y 1))
  (:goal (= X 3)))
"""

BLOCKS = """
(define (problem blocks)
  (:types (block b1 b2) (place p1 p2 p3))
  (:fluents (loc (block) place) (clear (place) bool))
  (:action sweep
    :parameters (?b - block)
    :eff (:= (clear (loc ?b)) true))
  (:action slide
    :parameters (?b - block ?to - place)
    :prec (and (clear ?to) (not (= (loc ?b) ?to)))
    :eff (and (:= (clear (loc ?b)) true)
              (:= (clear ?to) false)
              (:= (loc ?b) ?to)))
  (:init (= (loc b1) p2) (= (loc b2) p1)
         (= (clear p1) false) (= (clear p2) false) (= (clear p3) true))
  (:goal (= (loc b1) p3)))
"""


def action(gp, name):
    for a in gp.actions:
        if a.name == name:
            return a
    raise KeyError(name)


class TestEffects:
    def test_increment_changes_only_target(self):
        gp = ground(parse_problem(COUNTER))
        assert gp.initial.value("X") == 2
        s2 = gp.apply(gp.initial, action(gp, "bump"))
        assert s2.value("X") == 3
        assert s2.value("Y") == 1

    def test_increment_chains(self):
        gp = ground(parse_problem(COUNTER))
        s = gp.initial
        for want in (3, 4, 5):
            s = gp.apply(s, action(gp, "bump"))
            assert s.value("X") == want

    def test_effects_read_source_state(self):
        gp = ground(parse_problem(COUNTER))
        s2 = gp.apply(gp.initial, action(gp, "swap"))
        assert (s2.value("X"), s2.value("Y")) == (1, 2)

    def test_value_outside_type_rejected(self):
        gp = ground(parse_problem(COUNTER))
        s = gp.initial
        for _ in range(3):
            s = gp.apply(s, action(gp, "bump"))
        with pytest.raises(EvaluationError):
            gp.apply(s, action(gp, "bump"))

    def test_indirect_target_resolves_in_source_state(self):
        gp = ground(parse_problem(BLOCKS))
        s2 = gp.apply(gp.initial, action(gp, "sweep(b1)"))
        assert s2.value("clear", ("p2",)) is True
        assert s2.value("clear", ("p1",)) is False
        assert s2.value("loc", ("b1",)) == "p2"

    def test_indirect_target_equals_direct_write(self):
        direct = BLOCKS.replace("(:= (clear (loc ?b)) true)",
                                "(:= (clear p2) true)", 1)
        gp1 = ground(parse_problem(BLOCKS))
        gp2 = ground(parse_problem(direct))
        s1 = gp1.apply(gp1.initial, action(gp1, "sweep(b1)"))
        s2 = gp2.apply(gp2.initial, action(gp2, "sweep(b1)"))
        assert s1.values == s2.values

    def test_indirect_target_unaffected_by_sibling_move(self):
        # both effects see loc(b1)=p2: the old place is cleared even though
        # the object moves away in the same action
        gp = ground(parse_problem(BLOCKS))
        s2 = gp.try_action(gp.initial, action(gp, "slide(b1, p3)"))
        assert s2 is not None
        assert s2.value("loc", ("b1",)) == "p3"
        assert s2.value("clear", ("p2",)) is True
        assert s2.value("clear", ("p3",)) is False

    def test_conflicting_writes_rejected(self):
        text = COUNTER.replace("(:= X (+ X 1))",
                               "(and (:= X 1) (:= X 2))", 1)
        gp = ground(parse_problem(text))
        with pytest.raises(EffectConflictError):
            gp.apply(gp.initial, action(gp, "bump"))

    def test_duplicate_identical_writes_allowed(self):
        text = COUNTER.replace("(:= X (+ X 1))",
                               "(and (:= X 1) (:= X 1))", 1)
        gp = ground(parse_problem(text))
        assert gp.apply(gp.initial, action(gp, "bump")).value("X") == 1


CONSTRAINED = """
(define (problem capped)
  (:types (count 0 1 2 3 4))
  (:fluents (X () count))
  (:action bump
    :parameters ()
    :eff (:= X (+ X 1)))
  (:state-constraint cap (not (= X 3)))
  (:init (= X INIT))
  (:goal (= X 4)))
"""


class TestConstraints:
    def test_constraint_blocks_bad_successor(self):
        gp = ground(parse_problem(CONSTRAINED.replace("INIT", "2")))
        assert gp.try_action(gp.initial, action(gp, "bump")) is None
        assert gp.successors(gp.initial) == []

    def test_constraint_checked_on_successor_not_source(self):
        gp = ground(parse_problem(CONSTRAINED.replace("INIT", "1")))
        s2 = gp.try_action(gp.initial, action(gp, "bump"))
        assert s2 is not None and s2.value("X") == 2

    def test_initial_state_must_satisfy_constraints(self):
        with pytest.raises(ConstraintViolation):
            ground(parse_problem(CONSTRAINED.replace("INIT", "3")))

    def test_parameterized_constraint_grounds_over_members(self):
        text = BLOCKS.replace(
            "(:init",
            "(:state-constraint somewhere\n"
            "    :parameters (?b - block)\n"
            "    (or (= (loc ?b) p1) (= (loc ?b) p2) (= (loc ?b) p3)))\n"
            "  (:init", 1)
        gp = ground(parse_problem(text))
        assert len(gp.constraints) == 2


class TestGrounding:
    def test_ground_count_is_domain_product(self):
        gp = ground(parse_problem(BLOCKS))
        slides = [a for a in gp.actions if a.schema == "slide"]
        assert len(slides) == 2 * 3

    def test_ground_order_follows_member_order(self):
        gp = ground(parse_problem(BLOCKS))
        slides = [a.name for a in gp.actions if a.schema == "slide"]
        assert slides == ["slide(b1, p1)", "slide(b1, p2)", "slide(b1, p3)",
                          "slide(b2, p1)", "slide(b2, p2)", "slide(b2, p3)"]

    def test_variable_order_is_declaration_order(self):
        gp = ground(parse_problem(BLOCKS))
        assert gp.var_names == ["loc(b1)", "loc(b2)",
                                "clear(p1)", "clear(p2)", "clear(p3)"]

    def test_tautological_goal_folds_away(self):
        text = COUNTER.replace("(:goal (= X 3))", "(:goal (= 1 1))")
        gp = ground(parse_problem(text))
        assert gp.goal_satisfied(gp.initial)

    def test_missing_initial_value_rejected(self):
        text = COUNTER.replace("(= Y 1)", "")
        with pytest.raises(FstripsError):
            ground(parse_problem(text))

    def test_initial_value_outside_type_rejected(self):
        text = COUNTER.replace("(= Y 1)", "(= Y 9)")
        with pytest.raises(FstripsError):
            ground(parse_problem(text))


class TestSuccessors:
    def test_indexed_matches_exhaustive(self):
        gp = ground(parse_problem(BLOCKS))
        rng = random.Random(4)
        frontier = [gp.initial]
        checked = 0
        while frontier and checked < 40:
            s = frontier.pop(rng.randrange(len(frontier)))
            fast = [(a.name, s2.values) for a, s2 in gp.successors(s)]
            slow = [(a.name, s2.values) for a, s2 in gp.successors_all(s)]
            assert fast == slow
            frontier.extend(s2 for _, s2 in gp.successors(s))
            checked += 1
        assert checked > 5

    def test_replay_reports_failure_step(self):
        gp = ground(parse_problem(BLOCKS))
        good = [action(gp, "slide(b1, p3)")]
        r = gp.replay(good)
        assert r.valid and r.failed_step is None
        bad = [action(gp, "slide(b1, p3)"), action(gp, "slide(b2, p3)")]
        r = gp.replay(bad)
        assert not r.valid
        assert r.failed_step == 1
        assert "slide(b2, p3)" in r.reason

    def test_replay_goal_check(self):
        gp = ground(parse_problem(BLOCKS))
        r = gp.replay([action(gp, "sweep(b1)")])
        assert r.failed_step is None and not r.goal_satisfied


FIXED = """
(define (problem fixed)
  (:types (count 0 1 2 3))
  (:fluents (X () count))
  (:fixed (succ (count) count))
  (:fixed-init (= (succ 0) 1) (= (succ 1) 2) (= (succ 2) 3) (= (succ 3) 3))
  (:action bump
    :parameters ()
    :eff (:= X (succ X)))
  (:init (= X 0))
  (:goal (= X 3)))
"""


class TestFixedAndProcedures:
    def test_extensional_lookup(self):
        gp = ground(parse_problem(FIXED))
        s = gp.apply(gp.initial, action(gp, "bump"))
        assert s.value("X") == 1

    def test_extensional_table_must_be_total(self):
        text = FIXED.replace("(= (succ 3) 3)", "")
        with pytest.raises(FstripsError):
            parse_problem(text)

    def test_procedure_binding(self):
        text = FIXED.replace("(:fixed (succ (count) count))",
                             "(:procedures @succ)")
        text = text.replace("(:fixed-init (= (succ 0) 1) (= (succ 1) 2) "
                            "(= (succ 2) 3) (= (succ 3) 3))", "")
        text = text.replace("(succ X)", "(@succ X)")
        gp = ground(parse_problem(text, {"@succ": lambda v: min(v + 1, 3)}))
        s = gp.apply(gp.initial, action(gp, "bump"))
        assert s.value("X") == 1

    def test_procedure_missing_from_registry(self):
        text = FIXED.replace("(:fixed (succ (count) count))",
                             "(:procedures @succ)")
        with pytest.raises(ParseError):
            parse_problem(text)

    def test_procedure_folds_over_constants(self):
        # a procedure applied to constants disappears during grounding
        text = COUNTER.replace("(:goal (= X 3))", "(:goal (= X (+ 1 2)))")
        gp = ground(parse_problem(text))
        s = gp.apply(gp.initial, action(gp, "bump"))
        assert gp.goal_satisfied(s)


class TestParserErrors:
    def test_unknown_symbol(self):
        with pytest.raises(ParseError):
            parse_problem(COUNTER.replace("(= Y 1)", "(= Z 1)"))

    def test_missing_goal(self):
        with pytest.raises(ParseError):
            parse_problem(COUNTER.replace("(:goal (= X 3))", ""))

    def test_bad_init_entry(self):
        with pytest.raises(ParseError):
            parse_problem(COUNTER.replace("(= X 2)", "(X 2)"))

    def test_unbalanced_parens(self):
        with pytest.raises(ParseError):
            parse_problem(COUNTER.rstrip().rstrip(")"))

    def test_comments_are_ignored(self):
        gp = ground(parse_problem("; a comment line\n" + COUNTER))
        assert gp.initial.value("X") == 2

    def test_duplicate_type_rejected(self):
        text = COUNTER.replace("(:types (count 0 1 2 3 4 5))",
                               "(:types (count 0 1) (count 2 3))")
        with pytest.raises(FstripsError):
            parse_problem(text)
