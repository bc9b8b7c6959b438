"""Width-based search: novelty bookkeeping, IW, SIW and best-first BFWS.

The search layer is generic over ground problems.  States expose an atom
view (variable slot, value) optionally extended with derived boolean
features; novelty of a state is the size of the smallest new atom set it
contains, capped at 2 (anything wider is reported as 3).  IW(k) is plain
breadth-first search that prunes states of novelty above k.  BFWS orders an
open list by novelty and goal counters and never prunes, so exhausting it
decides unsolvability.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

from .fstrips import GroundProblem, State
from .tables import REST_CONF


class NoveltyTable:
    """Interned atoms and atom pairs seen so far, per partition.

    Atom ids are packed ints; a pair (a, b) with a < b becomes
    ``(a + 1) * K + b`` which cannot collide with a single atom id since ids
    stay below K.  Each partition key owns an independent seen-set."""

    K = 1 << 14

    def __init__(self, max_width: int = 2):
        self.max_width = max_width
        self._intern: dict = {}
        self._seen: dict = {}

    def atom_ids(self, values: tuple, features: tuple = ()) -> list[int]:
        intern = self._intern
        ids = []
        for slot, v in enumerate(values):
            key = (slot, v)
            a = intern.get(key)
            if a is None:
                a = len(intern)
                if a >= self.K:
                    raise OverflowError("atom space exhausted")
                intern[key] = a
            ids.append(a)
        base = len(values)
        for off, v in enumerate(features):
            key = (base + off, v)
            a = intern.get(key)
            if a is None:
                a = len(intern)
                if a >= self.K:
                    raise OverflowError("atom space exhausted")
                intern[key] = a
            ids.append(a)
        return ids

    def assess_and_mark(self, values: tuple, features: tuple = (),
                        partition: tuple = ()) -> int:
        """Novelty of the state (1, 2, or 3 meaning above 2), marking every
        atom and pair as seen in the given partition."""
        ids = sorted(self.atom_ids(values, features))
        seen = self._seen.get(partition)
        if seen is None:
            seen = self._seen[partition] = set()
        before = len(seen)
        seen.update(ids)
        w = 1 if len(seen) > before else 3
        if self.max_width >= 2:
            k = self.K
            before = len(seen)
            seen.update(a * k + b + k for a, b in itertools.combinations(ids, 2))
            if w == 3 and len(seen) > before:
                w = 2
        return w


def brute_force_novelty(history: list[list], atoms: list) -> int:
    """Reference novelty: smallest n <= 2 such that some n-subset of
    ``atoms`` appears in no earlier atom list, else 3.  Quadratic; used to
    cross-check NoveltyTable."""
    singles = set(atoms)
    for h in history:
        singles -= set(h)
        if not singles:
            break
    if singles:
        return 1
    pairs = {frozenset(p) for p in itertools.combinations(set(atoms), 2)}
    for h in history:
        hs = set(h)
        pairs = {p for p in pairs if not p <= hs}
        if not pairs:
            break
    return 2 if pairs else 3


class Node:
    __slots__ = ("state", "parent", "action", "depth")

    def __init__(self, state: State, parent=None, action=None):
        self.state = state
        self.parent = parent
        self.action = action
        self.depth = 0 if parent is None else parent.depth + 1

    def plan(self) -> list:
        acts, n = [], self
        while n.parent is not None:
            acts.append(n.action)
            n = n.parent
        acts.reverse()
        return acts

    def path(self) -> list["Node"]:
        nodes, n = [], self
        while n is not None:
            nodes.append(n)
            n = n.parent
        nodes.reverse()
        return nodes


@dataclass
class IWResult:
    solved: bool
    plan: list | None
    goal_node: Node | None
    generated: int
    expanded: int
    pruned: int
    exhausted: bool
    budget_hit: bool


def iw(ground: GroundProblem, width: int, *, start: State | None = None,
       goal=None, features=None, node_budget: int | None = None) -> IWResult:
    """Breadth-first search pruning states of novelty above ``width``.
    The goal test runs at generation time; the novelty table is fresh per
    call."""
    if goal is None:
        goal = ground.goal_satisfied
    if features is None:
        features = lambda values: ()
    state = ground.initial if start is None else start
    table = NoveltyTable(max_width=min(width, 2))
    root = Node(state)

    generated = expanded = pruned = 0
    if goal(state):
        return IWResult(True, [], root, 0, 0, 0, False, False)
    table.assess_and_mark(state.values, features(state.values))
    queue = [root]
    qi = 0
    budget_hit = False
    while qi < len(queue):
        node = queue[qi]
        qi += 1
        expanded += 1
        for action, s2 in ground.successors(node.state):
            generated += 1
            child = Node(s2, node, action)
            if goal(s2):
                return IWResult(True, child.plan(), child, generated,
                                expanded, pruned, False, False)
            w = table.assess_and_mark(s2.values, features(s2.values))
            if w <= width:
                queue.append(child)
            else:
                pruned += 1
            if node_budget and generated >= node_budget:
                budget_hit = True
                break
        if budget_hit:
            break
    return IWResult(False, None, None, generated, expanded, pruned,
                    not budget_hit, budget_hit)


def iw_driver(ground: GroundProblem, *, start=None, goal=None, features=None,
              node_budget=None, max_width: int = 2) -> IWResult:
    """IW(1), then IW(2) and so on up to ``max_width``."""
    last = None
    for w in range(1, max_width + 1):
        last = iw(ground, w, start=start, goal=goal, features=features,
                  node_budget=node_budget)
        if last.solved:
            return last
    return last


@dataclass
class SearchResult:
    outcome: str                 # solved | exhausted | budget | timeout
    plan: list | None
    generated: int
    expanded: int
    episodes: int = 0
    novelty_counts: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.outcome == "solved"


def siw(ground: GroundProblem, *, unsat, features=None, node_budget=None,
        max_width: int = 2) -> SearchResult:
    """Serialized IW: greedy episodes, each ending in a state with strictly
    fewer unsatisfied goal atoms, solved by the IW driver."""
    state = ground.initial
    plan: list = []
    generated = expanded = episodes = 0
    while True:
        g0 = unsat(state.values)
        if g0 == 0:
            return SearchResult("solved", plan, generated, expanded, episodes)
        episodes += 1
        r = iw_driver(ground, start=state,
                      goal=lambda s: unsat(s.values) < g0,
                      features=features, node_budget=node_budget,
                      max_width=max_width)
        generated += r.generated
        expanded += r.expanded
        if not r.solved:
            out = "budget" if r.budget_hit else "exhausted"
            return SearchResult(out, None, generated, expanded, episodes)
        plan.extend(r.plan)
        state = r.goal_node.state


# ---------------------------------------------------------------------------
# Obstruction analysis (the #c counter)


@dataclass
class ObstructionInfo:
    confs: frozenset
    objects: frozenset
    skeletons: int
    exhausted: bool
    budget_hit: bool
    missing_goal_atoms: tuple = ()

    @property
    def goal_unreachable(self) -> bool:
        """Some goal atom has no constraint-free plan at all, so the real
        problem cannot be solvable."""
        return bool(self.missing_goal_atoms) and self.exhausted


def compute_obstructing_set(compiled, *, skeleton_budget: int = 2_000_000
                            ) -> ObstructionInfo:
    """Find configs whose occupants block goal-directed motions.

    In the constraint-relaxed problem, a plan that moves a single object has
    a fixed skeleton: drive to a grasping base, swing the arm in (gripper
    empty) and out (holding), drive to a placing base, swing the arm in
    (holding) and release.  For each goal atom this enumerates all skeletons
    over the lookup tables, charges the one whose arm motions collide with
    the fewest distinct other objects, and records the blockers' configs.
    Newly implicated objects are processed transitively through their grasp
    skeletons.  The enumeration is exhaustive, so a goal atom with no
    skeleton at all is unreachable even without constraints."""
    tables = compiled.tables
    obj_conf = {o: compiled.ground.initial.values[s]
                for o, s in compiled.conf_slots.items()}

    # Bases reachable from the initial one by driving.
    adj: dict[str, set[str]] = {b: set() for b in tables.base_poses}
    for s, t in tables.base_edges.values():
        adj[s].add(t)
    comp, stack = {compiled.init_base}, [compiled.init_base]
    while stack:
        for n in adj[stack.pop()]:
            if n not in comp:
                comp.add(n)
                stack.append(n)

    placements = {c: [(b, a) for b, a in pairs if b in comp]
                  for c, pairs in tables.placement_index().items()}
    arm_in: dict[str, list[str]] = {}
    arm_out: dict[str, list[str]] = {}
    for tid, tr in tables.arm_trajectories.items():
        if tr.source == REST_CONF:
            arm_in.setdefault(tr.target, []).append(tid)
        else:
            arm_out.setdefault(tr.source, []).append(tid)

    state = {"skeletons": 0, "budget_hit": False}

    def hits(base, tid, holding, skip) -> frozenset | None:
        """Objects other than ``skip`` whose configs the trajectory sweeps.
        None when the enumeration budget is exhausted."""
        state["skeletons"] += 1
        if state["skeletons"] > skeleton_budget:
            state["budget_hit"] = True
            return None
        row = tables.overlap_row(tid, holding)
        out = set()
        if row:
            for o, c in obj_conf.items():
                if o != skip and tables.relative_id(base, c) in row:
                    out.add(o)
        return frozenset(out)

    def grasp_options(o) -> list[frozenset] | None:
        """Distinct violation sets for grasp-and-retract of ``o``, or None
        when the object cannot be grasped from any reachable base."""
        pairs = placements.get(obj_conf[o], [])
        if not pairs:
            return None
        opts = set()
        for b, a in pairs:
            for tin in arm_in.get(a, ()):
                vin = hits(b, tin, False, o)
                if vin is None:
                    return sorted(opts, key=lambda s: (len(s), sorted(s)))
                for tout in arm_out.get(a, ()):
                    vout = hits(b, tout, True, o)
                    if vout is None:
                        break
                    opts.add(vin | vout)
        return sorted(opts, key=lambda s: (len(s), sorted(s)))

    def approach_options(g, o) -> list[frozenset] | None:
        """Distinct violation sets for carrying ``o`` in over config ``g``."""
        pairs = placements.get(g, [])
        if not pairs:
            return None
        opts = set()
        for b, a in pairs:
            for tin in arm_in.get(a, ()):
                v = hits(b, tin, True, o)
                if v is None:
                    return sorted(opts, key=lambda s: (len(s), sorted(s)))
                opts.add(v)
        return sorted(opts, key=lambda s: (len(s), sorted(s)))

    slot_obj = {s: o for o, s in compiled.conf_slots.items()}
    confs: set = set()
    blockers: set = set()
    missing = []
    queue: list[tuple] = [("place", slot_obj[slot], want)
                          for slot, want in compiled.goal_atoms]
    while queue:
        kind, o, g = queue.pop(0)
        gopts = grasp_options(o)
        if kind == "place":
            aopts = approach_options(g, o)
            if not gopts or not aopts:
                missing.append((compiled.conf_slots[o], g))
                continue
            best, best_set = None, None
            for vg in gopts:
                if best is not None and len(vg) >= best:
                    break
                for va in aopts:
                    if best is not None and len(va) >= best:
                        break
                    u = vg | va
                    if best is None or len(u) < best:
                        best, best_set = len(u), u
            chosen = best_set if best_set is not None else frozenset()
        else:
            if not gopts:
                continue
            chosen = gopts[0]
        for other in chosen:
            confs.add(obj_conf[other])
            if other not in blockers:
                blockers.add(other)
                queue.append(("grasp", other, None))
    return ObstructionInfo(
        confs=frozenset(confs), objects=frozenset(blockers),
        skeletons=state["skeletons"], exhausted=not state["budget_hit"],
        budget_hit=state["budget_hit"], missing_goal_atoms=tuple(missing))


# ---------------------------------------------------------------------------
# Best-first width search


def make_counters(compiled, obstruct_confs: frozenset):
    """Per-state counters: unsatisfied goal atoms, a move-count estimate
    (two per misplaced goal object, one less when one is already held), and
    the number of objects sitting on obstructing configs."""
    goal_atoms = compiled.goal_atoms
    goal_of = {slot: want for slot, want in goal_atoms}
    conf_slots = tuple(compiled.conf_slots.values())
    slot_obj = {slot: o for o, slot in compiled.conf_slots.items()}
    hold_slot = compiled.hold_slot

    def counters(values: tuple) -> tuple[int, int, int]:
        ng = 0
        misplaced = []
        for slot, want in goal_atoms:
            if values[slot] != want:
                ng += 1
                misplaced.append(slot_obj[slot])
        hm = 2 * len(misplaced)
        if hm and values[hold_slot] in misplaced:
            hm -= 1
        nc = 0
        if obstruct_confs:
            for slot in conf_slots:
                if values[slot] in obstruct_confs:
                    nc += 1
        return ng, hm, nc

    return counters


UNREACHABLE = 1 << 20


def make_distance(compiled):
    """Tie-break signal: driving distance (in base-graph hops) from the
    current base to the nearest base that can act on a misplaced goal
    object, via a lazily cached multi-source BFS field per config."""
    tables = compiled.tables
    adj: dict[str, list[str]] = {b: [] for b in tables.base_poses}
    for s, t in tables.base_edges.values():
        adj[s].append(t)
    act_bases: dict[str, set[str]] = {}
    for c, pairs in tables.placement_index().items():
        act_bases[c] = {b for b, _ in pairs}
    fields: dict[str, dict[str, int]] = {}

    def field(conf: str) -> dict[str, int]:
        f = fields.get(conf)
        if f is None:
            f = {b: 0 for b in act_bases.get(conf, ())}
            frontier = list(f)
            d = 0
            while frontier:
                d += 1
                nxt = []
                for b in frontier:
                    for n in adj[b]:
                        if n not in f:
                            f[n] = d
                            nxt.append(n)
                frontier = nxt
            fields[conf] = f
        return f

    goal_conf = compiled.goal_conf
    conf_slots = compiled.conf_slots
    hold_slot = compiled.hold_slot
    base_slot = compiled.base_slot

    def distance(values: tuple) -> int:
        base = values[base_slot]
        hold = values[hold_slot]
        if hold in goal_conf:
            return field(goal_conf[hold]).get(base, UNREACHABLE)
        best = 0
        first = True
        for o, want in goal_conf.items():
            conf = values[conf_slots[o]]
            if conf == want:
                continue
            d = field(conf).get(base, UNREACHABLE)
            if first or d < best:
                best, first = d, False
        return best

    return distance


TIE_BREAK = ("w", "nc", "hm", "ng", "d")


def bfws(ground: GroundProblem, *, counters, features=None, distance=None,
         tie_break: tuple = TIE_BREAK, prune_w3: bool = False,
         node_budget: int | None = None, time_budget: float | None = None
         ) -> SearchResult:
    """Best-first search on (novelty, counters).  Novelty is computed
    relative to the counter profile (#g, h_M, #c), so a state is novel when
    it shows a new atom among states equally far from the goal; states of
    novelty 3 are kept but ordered last unless ``prune_w3`` discards them.
    ``distance`` orders otherwise tied states by how far the base is from
    anything goal-relevant.  Duplicate states are dropped at generation, so
    an empty open list proves unsolvability."""
    if features is None:
        features = lambda values: ()
    if distance is None:
        tie_break = tuple(p for p in tie_break if p != "d")
    table = NoveltyTable(max_width=2)
    deadline = time.monotonic() + time_budget if time_budget else None

    def key(values, w, ng, hm, nc, idx):
        parts = {"w": w, "ng": ng, "hm": hm, "nc": nc}
        if distance is not None:
            parts["d"] = distance(values)
        return tuple(parts[p] for p in tie_break) + (idx,)

    root = Node(ground.initial)
    ng, hm, nc = counters(root.state.values)
    w = table.assess_and_mark(root.state.values, features(root.state.values),
                              partition=(ng, hm, nc))
    open_heap = [(key(root.state.values, w, ng, hm, nc, 0), root)]
    seen = {root.state.values}
    generated = expanded = 0
    serial = 0
    novelty_counts = {1: 0, 2: 0, 3: 0}
    novelty_counts[w] += 1
    while open_heap:
        _, node = heapq.heappop(open_heap)
        if ground.goal_satisfied(node.state):
            return SearchResult("solved", node.plan(), generated, expanded,
                                novelty_counts=novelty_counts)
        expanded += 1
        if deadline and expanded % 64 == 0 and time.monotonic() > deadline:
            return SearchResult("timeout", None, generated, expanded,
                                novelty_counts=novelty_counts)
        for action, s2 in ground.successors(node.state):
            if s2.values in seen:
                continue
            seen.add(s2.values)
            generated += 1
            if node_budget and generated > node_budget:
                return SearchResult("budget", None, generated, expanded,
                                    novelty_counts=novelty_counts)
            child = Node(s2, node, action)
            ng, hm, nc = counters(s2.values)
            w = table.assess_and_mark(s2.values, features(s2.values),
                                      partition=(ng, hm, nc))
            novelty_counts[w] += 1
            if w >= 3 and prune_w3:
                continue
            serial += 1
            heapq.heappush(open_heap, (key(s2.values, w, ng, hm, nc, serial),
                                       child))
    return SearchResult("exhausted", None, generated, expanded,
                        novelty_counts=novelty_counts)
