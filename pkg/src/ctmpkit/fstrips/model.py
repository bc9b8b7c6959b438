"""Core modeling layer: typed state-variable planning problems with state constraints.

A state assigns one constant to every state variable ``f(c)``, where ``f`` is a
fluent symbol and ``c`` a tuple of constants.  Fixed symbols never change
denotation: they are either extensional (a total lookup table) or procedural
(a host callable registered by name, written ``@name``).  Terms and formulas
are variable-free after grounding.  Action effects ``f(t) := w`` evaluate every
subterm, including the left-hand argument tuple, against the source state, so
all effects of one action apply simultaneously.  State constraints act as
implicit preconditions: an action is applicable only when its precondition
holds in the current state and every ground constraint holds in the successor.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Iterable, Mapping, Sequence

Value = Any  # constant denotations: str, int or bool

# Standard symbols with their usual meaning, available without registration.
ARITHMETIC: dict[str, Callable[..., Value]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
}


class FstripsError(Exception):
    """Base class for modeling, grounding and evaluation errors."""


class EvaluationError(FstripsError):
    """A term or formula could not be evaluated in the given state."""


class GroundingError(FstripsError):
    """Schema instantiation failed (empty domain, unknown symbol, bad arity)."""


class EffectConflictError(FstripsError):
    """Two effects of one action wrote different values to one state variable."""


class ConstraintViolation(FstripsError):
    """A state constraint does not hold where it must (e.g. the initial state)."""


# ---------------------------------------------------------------------------
# Signature


@dataclass(frozen=True)
class Type:
    """A named finite set of constants.  Member order is significant: it fixes
    grounding order.  A constant symbol may belong to several types (e.g. a
    dummy id shared between a parameter type and a wider value type)."""

    name: str
    members: tuple[Value, ...]

    def __post_init__(self):
        if not self.members:
            raise FstripsError(f"type {self.name!r} has no members")
        if len(set(self.members)) != len(self.members):
            raise FstripsError(f"type {self.name!r} has duplicate members")

    @property
    def member_set(self) -> frozenset:
        return frozenset(self.members)


BOOL = Type("bool", (False, True))


@dataclass(frozen=True)
class FluentDecl:
    name: str
    arg_types: tuple[str, ...]
    value_type: str


@dataclass(frozen=True)
class FixedDecl:
    """An extensional fixed symbol.  ``table`` maps argument tuples to values
    and must be total over the argument domain."""

    name: str
    arg_types: tuple[str, ...]
    value_type: str
    table: Mapping[tuple, Value]


@dataclass
class Signature:
    """Symbol declarations.  Every symbol lives in exactly one category:
    type member, fluent, extensional fixed, or procedure (``@`` prefix)."""

    types: dict[str, Type] = field(default_factory=dict)
    fluents: dict[str, FluentDecl] = field(default_factory=dict)
    fixed: dict[str, FixedDecl] = field(default_factory=dict)
    procedures: set[str] = field(default_factory=set)

    def __post_init__(self):
        self.types.setdefault("bool", BOOL)

    def add_type(self, name: str, members: Sequence[Value]) -> Type:
        if name in self.types:
            raise FstripsError(f"duplicate type {name!r}")
        t = Type(name, tuple(members))
        self.types[name] = t
        return t

    def add_fluent(self, name: str, arg_types: Sequence[str], value_type: str) -> FluentDecl:
        self._check_symbol(name)
        for t in (*arg_types, value_type):
            if t not in self.types:
                raise FstripsError(f"fluent {name!r} uses unknown type {t!r}")
        d = FluentDecl(name, tuple(arg_types), value_type)
        self.fluents[name] = d
        return d

    def add_fixed(self, name: str, arg_types: Sequence[str], value_type: str,
                  table: Mapping[tuple, Value]) -> FixedDecl:
        self._check_symbol(name)
        d = FixedDecl(name, tuple(arg_types), value_type, dict(table))
        domain = list(product(*(self.types[t].members for t in d.arg_types)))
        missing = [args for args in domain if args not in d.table]
        if missing:
            raise FstripsError(
                f"extensional symbol {name!r} is not total: missing {missing[:3]}...")
        self.fixed[name] = d
        return d

    def add_procedure(self, name: str) -> None:
        if not name.startswith("@"):
            raise FstripsError(f"procedure name {name!r} must start with '@'")
        self._check_symbol(name)
        self.procedures.add(name)

    def _check_symbol(self, name: str) -> None:
        if name in self.fluents or name in self.fixed or name in self.procedures:
            raise FstripsError(f"symbol {name!r} declared in more than one category")


# ---------------------------------------------------------------------------
# Terms


class Term:
    __slots__ = ()

    def eval(self, state: "State") -> Value:
        raise NotImplementedError


class Const(Term):
    __slots__ = ("value",)

    def __init__(self, value: Value):
        self.value = value

    def eval(self, state):
        return self.value

    def __repr__(self):
        return f"Const({self.value!r})"

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    def __hash__(self):
        return hash(("Const", self.value))


class Param(Term):
    """A schema parameter; only valid before grounding."""

    __slots__ = ("name", "type_name")

    def __init__(self, name: str, type_name: str):
        self.name = name
        self.type_name = type_name

    def eval(self, state):
        raise EvaluationError(f"unbound parameter {self.name!r}")

    def __repr__(self):
        return f"Param({self.name!r})"


class StateVarRef(Term):
    """A fluent application whose arguments folded to constants: a direct
    index into the state's value tuple."""

    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str):
        self.index = index
        self.name = name

    def eval(self, state):
        return state.values[self.index]

    def __repr__(self):
        return f"StateVarRef({self.name})"


class FluentApp(Term):
    __slots__ = ("name", "args")

    def __init__(self, name: str, args: Sequence[Term]):
        self.name = name
        self.args = tuple(args)

    def eval(self, state):
        key = (self.name, tuple(a.eval(state) for a in self.args))
        idx = state.ground.var_index.get(key)
        if idx is None:
            raise EvaluationError(f"no state variable {format_var(key)}")
        return state.values[idx]

    def __repr__(self):
        return f"FluentApp({self.name}, {list(self.args)})"


class FixedApp(Term):
    __slots__ = ("name", "args")

    def __init__(self, name: str, args: Sequence[Term]):
        self.name = name
        self.args = tuple(args)

    def eval(self, state):
        table = state.ground.fixed_tables.get(self.name)
        if table is None:
            raise EvaluationError(f"unknown extensional symbol {self.name!r}")
        key = tuple(a.eval(state) for a in self.args)
        try:
            return table[key]
        except KeyError:
            raise EvaluationError(
                f"extensional table miss: {self.name}{key!r}") from None


class ProcApp(Term):
    """Application of a procedure-defined fixed symbol, or of a standard
    arithmetic symbol (+, -, *) over integer constants."""

    __slots__ = ("name", "args")

    def __init__(self, name: str, args: Sequence[Term]):
        self.name = name
        self.args = tuple(args)

    def eval(self, state):
        fn = state.ground.registry.get(self.name)
        if fn is None:
            raise EvaluationError(f"unregistered procedure symbol {self.name!r}")
        return fn(*(a.eval(state) for a in self.args))


# ---------------------------------------------------------------------------
# Formulas


class Formula:
    __slots__ = ()

    def eval(self, state: "State") -> bool:
        raise NotImplementedError


class Truth(Formula):
    __slots__ = ("value",)

    def __init__(self, value: bool):
        self.value = value

    def eval(self, state):
        return self.value

    def __repr__(self):
        return "TRUE" if self.value else "FALSE"


TRUE = Truth(True)
FALSE = Truth(False)


class Eq(Formula):
    __slots__ = ("lhs", "rhs")

    def __init__(self, lhs: Term, rhs: Term):
        self.lhs = lhs
        self.rhs = rhs

    def eval(self, state):
        return self.lhs.eval(state) == self.rhs.eval(state)

    def __repr__(self):
        return f"Eq({self.lhs!r}, {self.rhs!r})"


class Holds(Formula):
    """A boolean-valued application (fluent, fixed or procedure) used as
    an atom."""

    __slots__ = ("term",)

    def __init__(self, term: Term):
        self.term = term

    def eval(self, state):
        return bool(self.term.eval(state))

    def __repr__(self):
        return f"Holds({self.term!r})"


class Not(Formula):
    __slots__ = ("item",)

    def __init__(self, item: Formula):
        self.item = item

    def eval(self, state):
        return not self.item.eval(state)


class And(Formula):
    __slots__ = ("items",)

    def __init__(self, items: Iterable[Formula]):
        self.items = tuple(items)

    def eval(self, state):
        for f in self.items:
            if not f.eval(state):
                return False
        return True

    def __repr__(self):
        return f"And({list(self.items)})"


class Or(Formula):
    __slots__ = ("items",)

    def __init__(self, items: Iterable[Formula]):
        self.items = tuple(items)

    def eval(self, state):
        for f in self.items:
            if f.eval(state):
                return True
        return False


# ---------------------------------------------------------------------------
# Schemas and problems


@dataclass(frozen=True)
class Effect:
    """Assignment ``lhs := rhs`` where lhs is a fluent application."""

    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]  # (param name, type name)
    precondition: Formula
    effects: tuple[Effect, ...]


@dataclass(frozen=True)
class ConstraintSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    body: Formula


@dataclass
class Problem:
    """A lifted problem: signature, schemas, constraints, total initial
    assignment, goal formula, and a registry binding procedure names to
    host callables."""

    name: str
    signature: Signature
    schemas: tuple[ActionSchema, ...]
    constraints: tuple[ConstraintSchema, ...]
    init: Mapping[tuple[str, tuple], Value]
    goal: Formula
    registry: Mapping[str, Callable[..., Value]] = field(default_factory=dict)


def format_var(key: tuple[str, tuple]) -> str:
    name, args = key
    if not args:
        return name
    return f"{name}({', '.join(str(a) for a in args)})"


# ---------------------------------------------------------------------------
# States


class State:
    """An immutable total assignment, stored as a value tuple in the ground
    problem's fixed variable order.  Identity and hashing use only the tuple,
    which doubles as the canonical duplicate-detection encoding."""

    __slots__ = ("values", "ground", "_hash")

    def __init__(self, values: tuple, ground: "GroundProblem"):
        self.values = values
        self.ground = ground
        self._hash = hash(values)

    def value(self, fluent: str, args: tuple = ()) -> Value:
        return self.values[self.ground.var_index[(fluent, args)]]

    def as_dict(self) -> dict[str, Value]:
        return {name: v for name, v in zip(self.ground.var_names, self.values)}

    def __eq__(self, other):
        return self.values == other.values

    def __hash__(self):
        return self._hash

    def __repr__(self):
        inner = ", ".join(f"{n}={v}" for n, v in self.as_dict().items())
        return f"State({inner})"


# ---------------------------------------------------------------------------
# Grounding: substitution and constant folding


def _substitute_term(term: Term, binding: Mapping[str, Const]) -> Term:
    if isinstance(term, Param):
        try:
            return binding[term.name]
        except KeyError:
            raise GroundingError(f"parameter {term.name!r} not bound") from None
    if isinstance(term, FluentApp):
        return FluentApp(term.name, [_substitute_term(a, binding) for a in term.args])
    if isinstance(term, FixedApp):
        return FixedApp(term.name, [_substitute_term(a, binding) for a in term.args])
    if isinstance(term, ProcApp):
        return ProcApp(term.name, [_substitute_term(a, binding) for a in term.args])
    return term


def _substitute(f: Formula, binding: Mapping[str, Const]) -> Formula:
    if isinstance(f, Truth):
        return f
    if isinstance(f, Eq):
        return Eq(_substitute_term(f.lhs, binding), _substitute_term(f.rhs, binding))
    if isinstance(f, Holds):
        return Holds(_substitute_term(f.term, binding))
    if isinstance(f, Not):
        return Not(_substitute(f.item, binding))
    if isinstance(f, And):
        return And(_substitute(i, binding) for i in f.items)
    if isinstance(f, Or):
        return Or(_substitute(i, binding) for i in f.items)
    raise GroundingError(f"cannot substitute in {f!r}")


class _Folder:
    """Bottom-up partial evaluation of ground terms and formulas.  Fixed and
    procedure applications over constant arguments reduce to constants (their
    denotation is state-independent), fluent applications over constant
    arguments reduce to direct state-variable references, and boolean
    connectives simplify around literal truth."""

    def __init__(self, ground: "GroundProblem"):
        self.ground = ground

    def term(self, t: Term) -> Term:
        if isinstance(t, (Const, StateVarRef)):
            return t
        if isinstance(t, Param):
            raise GroundingError(f"parameter {t.name!r} survived substitution")
        args = [self.term(a) for a in t.args]
        all_const = all(isinstance(a, Const) for a in args)
        if isinstance(t, FluentApp):
            if all_const:
                key = (t.name, tuple(a.value for a in args))
                idx = self.ground.var_index.get(key)
                if idx is None:
                    raise GroundingError(f"no state variable {format_var(key)}")
                return StateVarRef(idx, format_var(key))
            return FluentApp(t.name, args)
        if isinstance(t, FixedApp):
            if all_const:
                table = self.ground.fixed_tables[t.name]
                key = tuple(a.value for a in args)
                try:
                    return Const(table[key])
                except KeyError:
                    raise GroundingError(
                        f"extensional table miss: {t.name}{key!r}") from None
            return FixedApp(t.name, args)
        if isinstance(t, ProcApp):
            if all_const:
                fn = self.ground.registry.get(t.name)
                if fn is None:
                    raise GroundingError(f"unregistered procedure symbol {t.name!r}")
                return Const(fn(*(a.value for a in args)))
            return ProcApp(t.name, args)
        raise GroundingError(f"cannot fold term {t!r}")

    def formula(self, f: Formula) -> Formula:
        if isinstance(f, Truth):
            return f
        if isinstance(f, Eq):
            lhs, rhs = self.term(f.lhs), self.term(f.rhs)
            if isinstance(lhs, Const) and isinstance(rhs, Const):
                return TRUE if lhs.value == rhs.value else FALSE
            return Eq(lhs, rhs)
        if isinstance(f, Holds):
            term = self.term(f.term)
            if isinstance(term, Const):
                return TRUE if term.value else FALSE
            return Holds(term)
        if isinstance(f, Not):
            item = self.formula(f.item)
            if isinstance(item, Truth):
                return FALSE if item.value else TRUE
            return Not(item)
        if isinstance(f, (And, Or)):
            keep, short = [], isinstance(f, Or)
            for item in f.items:
                folded = self.formula(item)
                if isinstance(folded, Truth):
                    if folded.value == short:
                        return TRUE if short else FALSE
                    continue
                keep.append(folded)
            if not keep:
                return FALSE if short else TRUE
            if len(keep) == 1:
                return keep[0]
            return Or(keep) if short else And(keep)
        raise GroundingError(f"cannot fold formula {f!r}")


# ---------------------------------------------------------------------------
# Ground problems


class GroundAction:
    __slots__ = ("name", "schema", "args", "precondition", "effects", "index")

    def __init__(self, schema: str, args: tuple, precondition: Formula,
                 effects: tuple, index: int):
        self.schema = schema
        self.args = args
        self.name = schema if not args else f"{schema}({', '.join(str(a) for a in args)})"
        self.precondition = precondition
        self.effects = effects
        self.index = index

    def __repr__(self):
        return self.name


class GroundProblem:
    """A fully instantiated problem: fixed variable order, ground actions in
    stable order (schema order, then lexicographic member order), ground
    constraints, and an evaluation context (tables plus procedure registry)."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.signature = problem.signature
        self.fixed_tables = {d.name: d.table for d in problem.signature.fixed.values()}
        self.registry = dict(ARITHMETIC)
        self.registry.update(problem.registry)
        self._build_variables()
        self._build_initial()
        self._ground_actions()
        self._ground_constraints()
        goal = _substitute(problem.goal, {})
        self.goal = _Folder(self).formula(goal)
        self._buckets = None
        self.check_initial_constraints()

    # -- construction ------------------------------------------------------

    def _build_variables(self):
        sig = self.signature
        self.variables: list[tuple[str, tuple]] = []
        for decl in sig.fluents.values():
            domains = [sig.types[t].members for t in decl.arg_types]
            for args in product(*domains):
                self.variables.append((decl.name, args))
        self.var_index = {v: i for i, v in enumerate(self.variables)}
        self.var_names = [format_var(v) for v in self.variables]
        self.var_value_sets = [
            self.signature.types[self.signature.fluents[f].value_type].member_set
            for f, _ in self.variables
        ]

    def _build_initial(self):
        init = self.problem.init
        values = []
        for var in self.variables:
            if var not in init:
                raise FstripsError(f"initial state misses {format_var(var)}")
            v = init[var]
            if v not in self.var_value_sets[len(values)]:
                raise FstripsError(
                    f"initial value {v!r} outside value type of {format_var(var)}")
            values.append(v)
        extra = set(init) - set(self.variables)
        if extra:
            raise FstripsError(f"initial state sets unknown variables: {sorted(extra)[:3]}")
        self.initial = State(tuple(values), self)

    def _instantiate(self, params, seen_name):
        """Yield parameter bindings in lexicographic member order."""
        domains = []
        for pname, tname in params:
            t = self.signature.types.get(tname)
            if t is None:
                raise GroundingError(f"{seen_name}: unknown parameter type {tname!r}")
            if not t.members:
                raise GroundingError(f"{seen_name}: empty type {tname!r} as parameter domain")
            domains.append(t.members)
        names = [p for p, _ in params]
        for combo in product(*domains):
            yield dict(zip(names, map(Const, combo))), combo

    def _ground_actions(self):
        folder = _Folder(self)
        self.actions: list[GroundAction] = []
        for schema in self.problem.schemas:
            for binding, combo in self._instantiate(schema.params, schema.name):
                pre = folder.formula(_substitute(schema.precondition, binding))
                effects = []
                for eff in schema.effects:
                    lhs = folder.term(_substitute_term(eff.lhs, binding))
                    if not isinstance(lhs, (StateVarRef, FluentApp)):
                        raise GroundingError(
                            f"{schema.name}: effect target must be a fluent application")
                    rhs = folder.term(_substitute_term(eff.rhs, binding))
                    effects.append((lhs, rhs))
                self.actions.append(
                    GroundAction(schema.name, combo, pre, tuple(effects), len(self.actions)))

    def _ground_constraints(self):
        folder = _Folder(self)
        self.constraints: list[Formula] = []
        for schema in self.problem.constraints:
            for binding, _ in self._instantiate(schema.params, schema.name):
                self.constraints.append(
                    folder.formula(_substitute(schema.body, binding)))

    def check_initial_constraints(self):
        for i, c in enumerate(self.constraints):
            if not c.eval(self.initial):
                raise ConstraintViolation(
                    f"state constraint #{i} is violated in the initial state")

    # -- semantics ---------------------------------------------------------

    def apply(self, state: State, action: GroundAction) -> State:
        """Successor state under the action's effects.  All right-hand sides
        and left-hand argument tuples are evaluated in the source state before
        anything is written."""
        writes: dict[int, Value] = {}
        for lhs, rhs in action.effects:
            if type(lhs) is StateVarRef:
                idx = lhs.index
            else:
                key = (lhs.name, tuple(a.eval(state) for a in lhs.args))
                idx = self.var_index.get(key)
                if idx is None:
                    raise EvaluationError(f"no state variable {format_var(key)}")
            value = rhs.eval(state)
            prior = writes.get(idx)
            if prior is not None and prior != value:
                raise EffectConflictError(
                    f"{action.name}: conflicting writes {prior!r} / {value!r} "
                    f"to {self.var_names[idx]}")
            if value not in self.var_value_sets[idx]:
                raise EvaluationError(
                    f"{action.name}: value {value!r} outside value type of "
                    f"{self.var_names[idx]}")
            writes[idx] = value
        values = list(state.values)
        for idx, v in writes.items():
            values[idx] = v
        return State(tuple(values), self)

    def try_action(self, state: State, action: GroundAction) -> State | None:
        """Successor if the action is applicable in ``state``, else None.
        Applicability = precondition holds in the source state and every
        ground constraint holds in the successor."""
        if not action.precondition.eval(state):
            return None
        succ = self.apply(state, action)
        for c in self.constraints:
            if not c.eval(succ):
                return None
        return succ

    def applicable(self, state: State, action: GroundAction) -> bool:
        return self.try_action(state, action) is not None

    def successors(self, state: State) -> list[tuple[GroundAction, State]]:
        """All applicable actions with their result states, in ground order."""
        out = []
        for action in self._candidates(state):
            succ = self.try_action(state, action)
            if succ is not None:
                out.append((action, succ))
        return out

    def successors_all(self, state: State) -> list[tuple[GroundAction, State]]:
        """Reference path scanning every ground action; used to cross-check
        the indexed candidate path."""
        out = []
        for action in self.actions:
            succ = self.try_action(state, action)
            if succ is not None:
                out.append((action, succ))
        return out

    def goal_satisfied(self, state: State) -> bool:
        return self.goal.eval(state)

    def replay(self, actions: Iterable[GroundAction]) -> "ReplayResult":
        """Apply a plan from the initial state, stopping at the first
        inapplicable step."""
        states = [self.initial]
        for i, action in enumerate(actions):
            if not action.precondition.eval(states[-1]):
                return ReplayResult(states, i, f"precondition of {action.name} fails", False)
            succ = self.apply(states[-1], action)
            for j, c in enumerate(self.constraints):
                if not c.eval(succ):
                    return ReplayResult(
                        states, i, f"state constraint #{j} violated after {action.name}",
                        False)
            states.append(succ)
        return ReplayResult(states, None, None, self.goal_satisfied(states[-1]))

    # -- candidate indexing ------------------------------------------------

    def _equality_requirements(self, action: GroundAction):
        """(variable index, value) pairs forced by top-level equality conjuncts."""
        pre = action.precondition
        conjuncts = pre.items if isinstance(pre, And) else (pre,)
        out = []
        for c in conjuncts:
            if isinstance(c, Eq):
                a, b = c.lhs, c.rhs
                if type(a) is StateVarRef and type(b) is Const:
                    out.append((a.index, b.value))
                elif type(b) is StateVarRef and type(a) is Const:
                    out.append((b.index, a.value))
        return out

    def _build_buckets(self):
        # Each action lands in the bucket of its rarest required equality,
        # which keeps candidate lists short (e.g. base moves keyed by their
        # source node rather than by the shared arm-at-rest conjunct).
        counts: dict[tuple, int] = {}
        reqs = []
        for action in self.actions:
            r = self._equality_requirements(action)
            reqs.append(r)
            for key in r:
                counts[key] = counts.get(key, 0) + 1
        buckets: dict[tuple, list[GroundAction]] = {}
        unkeyed: list[GroundAction] = []
        for action, r in zip(self.actions, reqs):
            if not r:
                unkeyed.append(action)
                continue
            key = min(r, key=lambda k: counts[k])
            buckets.setdefault(key, []).append(action)
        self._buckets = buckets
        self._unkeyed = unkeyed

    def _candidates(self, state: State) -> list[GroundAction]:
        if self._buckets is None:
            self._build_buckets()
        values = state.values
        groups = [self._unkeyed]
        for idx, v in enumerate(values):
            hit = self._buckets.get((idx, v))
            if hit is not None:
                groups.append(hit)
        if len(groups) == 1:
            return groups[0]
        merged = [a for g in groups for a in g]
        merged.sort(key=lambda a: a.index)
        return merged


@dataclass
class ReplayResult:
    states: list[State]
    failed_step: int | None
    reason: str | None
    goal_satisfied: bool

    @property
    def valid(self) -> bool:
        return self.failed_step is None and self.goal_satisfied


def ground(problem: Problem) -> GroundProblem:
    """Instantiate schemas and constraints over their parameter types and
    verify the initial state (totality, typing, state constraints)."""
    return GroundProblem(problem)
