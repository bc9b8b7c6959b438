"""Text front end for the modeling core.

Problems are written as s-expressions; the exact grammar is documented in
docs/formats.md.  Sketch:

    (define (problem NAME)
      (:types (block b1 b2) (count 0 1 2 3))
      (:fluents (loc (block) block) (X () count))
      (:fixed (succ (count) count))
      (:procedures @near)
      (:action move
        :parameters (?b - block ?to - block)
        :prec (and (= (loc ?b) ?b2) ...)
        :eff (and (:= (loc ?b) ?to) ...))
      (:state-constraint apart
        :parameters (?b - block)
        (@near (loc ?b)))
      (:init (= (loc b1) b2) (= X 0))
      (:fixed-init (= (succ 0) 1) ...)
      (:goal (and (= (loc b1) b1))))

Bare symbols resolve against the signature: a declared zero-ary fluent or
fixed symbol parses as its application, anything else must be a known
constant.  ``true``/``false`` denote booleans, integer literals denote ints.
Procedure bodies are never parsed; names listed under ``:procedures`` are
bound from the registry passed to :func:`parse_problem`.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping

from .model import (
    ActionSchema, And, Const, ConstraintSchema, Effect, Eq, FixedApp, FluentApp,
    Formula, FstripsError, Holds, Not, Or, Param, ProcApp, Problem, Signature,
    Term, ARITHMETIC,
)


class ParseError(FstripsError):
    pass


# -- s-expression reader ----------------------------------------------------


def tokenize(text: str) -> list[str]:
    out, i, n = [], 0, len(text)
    while i < n:
        c = text[i]
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            out.append(c)
            i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def read_sexprs(text: str):
    tokens = tokenize(text)
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise ParseError("missing ')'")
                if tokens[pos] == ")":
                    pos += 1
                    return items
                items.append(read())
        if tok == ")":
            raise ParseError("unexpected ')'")
        return tok

    exprs = []
    while pos < len(tokens):
        exprs.append(read())
    return exprs


def _atom_value(tok: str) -> Any:
    if tok == "true":
        return True
    if tok == "false":
        return False
    try:
        return int(tok)
    except ValueError:
        return tok


# -- problem construction ---------------------------------------------------


class _ProblemReader:
    def __init__(self, registry: Mapping[str, Callable]):
        self.sig = Signature()
        self.registry = dict(registry)
        self.constants: dict[Any, str] = {}  # member -> one declaring type
        self.schemas = []
        self.constraints = []
        self.init: dict[tuple[str, tuple], Any] = {}
        self.fixed_init: dict[str, dict[tuple, Any]] = {}
        self.fixed_decls: list[tuple[str, tuple[str, ...], str]] = []
        self.goal: Formula | None = None
        self.name = "unnamed"

    def read(self, expr) -> Problem:
        if not (isinstance(expr, list) and expr and expr[0] == "define"):
            raise ParseError("expected (define (problem NAME) ...)")
        head = expr[1]
        if not (isinstance(head, list) and len(head) == 2 and head[0] == "problem"):
            raise ParseError("expected (problem NAME)")
        self.name = head[1]
        sections = expr[2:]
        by_tag = [(s[0], s) for s in sections if isinstance(s, list) and s]
        for tag, body in by_tag:
            if tag == ":types":
                self._read_types(body[1:])
        self.constants[True] = "bool"
        self.constants[False] = "bool"
        for tag, body in by_tag:
            if tag == ":fluents":
                for decl in body[1:]:
                    self._read_fluent(decl)
            elif tag == ":fixed":
                for decl in body[1:]:
                    self._read_fixed_decl(decl)
            elif tag == ":procedures":
                for name in body[1:]:
                    self.sig.add_procedure(name)
                    if name not in self.registry:
                        raise ParseError(f"procedure {name!r} missing from registry")
        for tag, body in by_tag:
            if tag == ":fixed-init":
                self._read_fixed_init(body[1:])
        self._install_fixed()
        for tag, body in by_tag:
            if tag == ":action":
                self._read_action(body)
            elif tag == ":state-constraint":
                self._read_constraint(body)
            elif tag == ":init":
                self._read_init(body[1:])
            elif tag == ":goal":
                if len(body) != 2:
                    raise ParseError(":goal takes exactly one formula")
                self.goal = self._formula(body[1], {})
        if self.goal is None:
            raise ParseError("problem has no :goal")
        return Problem(
            name=self.name,
            signature=self.sig,
            schemas=tuple(self.schemas),
            constraints=tuple(self.constraints),
            init=self.init,
            goal=self.goal,
            registry=self.registry,
        )

    def _read_types(self, decls):
        for d in decls:
            if not (isinstance(d, list) and len(d) >= 2):
                raise ParseError(f"bad type declaration {d!r}")
            name, members = d[0], [_atom_value(m) for m in d[1:]]
            self.sig.add_type(name, members)
            for m in members:
                self.constants.setdefault(m, name)

    def _read_fluent(self, decl):
        if not (isinstance(decl, list) and len(decl) == 3 and isinstance(decl[1], list)):
            raise ParseError(f"bad fluent declaration {decl!r}, want (name (argtypes...) valuetype)")
        self.sig.add_fluent(decl[0], tuple(decl[1]), decl[2])

    def _read_fixed_decl(self, decl):
        if not (isinstance(decl, list) and len(decl) == 3 and isinstance(decl[1], list)):
            raise ParseError(f"bad fixed declaration {decl!r}")
        self.fixed_decls.append((decl[0], tuple(decl[1]), decl[2]))
        self.fixed_init.setdefault(decl[0], {})

    def _read_fixed_init(self, entries):
        for e in entries:
            if not (isinstance(e, list) and len(e) == 3 and e[0] == "="):
                raise ParseError(f"bad :fixed-init entry {e!r}")
            app = e[1]
            if not (isinstance(app, list) and app):
                raise ParseError(f"bad :fixed-init target {app!r}")
            name = app[0]
            if name not in self.fixed_init:
                raise ParseError(f"{name!r} is not a declared fixed symbol")
            args = tuple(_atom_value(a) for a in app[1:])
            self.fixed_init[name][args] = _atom_value(e[2])

    def _install_fixed(self):
        for name, arg_types, value_type in self.fixed_decls:
            self.sig.add_fixed(name, arg_types, value_type, self.fixed_init[name])

    def _read_params(self, entries) -> tuple[tuple[str, str], ...]:
        # "?x - type ?y - type" triplets
        if not isinstance(entries, list) or len(entries) % 3:
            raise ParseError(f"bad parameter list {entries!r}")
        params = []
        for i in range(0, len(entries), 3):
            pname, dash, tname = entries[i:i + 3]
            if dash != "-" or not pname.startswith("?"):
                raise ParseError(f"bad parameter triplet {entries[i:i+3]!r}")
            params.append((pname, tname))
        return tuple(params)

    def _read_action(self, body):
        name = body[1]
        fields = dict(zip(body[2::2], body[3::2]))
        params = self._read_params(fields.get(":parameters", fields.get(":parameter", [])))
        scope = dict(params)
        prec = self._formula(fields[":prec"], scope) if ":prec" in fields else And(())
        if ":eff" not in fields:
            raise ParseError(f"action {name!r} has no :eff")
        self.schemas.append(ActionSchema(name, params, prec, self._effects(fields[":eff"], scope)))

    def _read_constraint(self, body):
        name = body[1]
        rest = body[2:]
        params: tuple = ()
        if rest and rest[0] in (":parameters", ":parameter"):
            params = self._read_params(rest[1])
            rest = rest[2:]
        if len(rest) != 1:
            raise ParseError(f"state constraint {name!r} needs exactly one body formula")
        self.constraints.append(ConstraintSchema(name, params, self._formula(rest[0], dict(params))))

    def _read_init(self, entries):
        for e in entries:
            if not (isinstance(e, list) and len(e) == 3 and e[0] == "="):
                raise ParseError(f"bad :init entry {e!r}, want (= (fluent args) value)")
            target = e[1]
            if isinstance(target, str):
                target = [target]
            name = target[0]
            if name not in self.sig.fluents:
                raise ParseError(f":init target {name!r} is not a fluent")
            args = tuple(_atom_value(a) for a in target[1:])
            self.init[(name, args)] = _atom_value(e[2])

    # -- terms and formulas ---------------------------------------------

    def _term(self, expr, scope: Mapping[str, str]) -> Term:
        if isinstance(expr, str):
            if expr.startswith("?"):
                if expr not in scope:
                    raise ParseError(f"unknown parameter {expr!r}")
                return Param(expr, scope[expr])
            value = _atom_value(expr)
            if isinstance(value, str):
                if value in self.sig.fluents:
                    if self.sig.fluents[value].arg_types:
                        raise ParseError(f"fluent {value!r} used without arguments")
                    return FluentApp(value, ())
                if value in self.sig.fixed:
                    if self.sig.fixed[value].arg_types:
                        raise ParseError(f"fixed symbol {value!r} used without arguments")
                    return FixedApp(value, ())
                if value not in self.constants:
                    raise ParseError(f"unknown symbol {value!r}")
            return Const(value)
        if isinstance(expr, list) and expr:
            head = expr[0]
            args = [self._term(a, scope) for a in expr[1:]]
            if head in self.sig.fluents:
                return FluentApp(head, args)
            if head in self.sig.fixed:
                return FixedApp(head, args)
            if head in self.sig.procedures or head in ARITHMETIC:
                return ProcApp(head, args)
            raise ParseError(f"unknown symbol {head!r} in term {expr!r}")
        raise ParseError(f"bad term {expr!r}")

    def _formula(self, expr, scope) -> Formula:
        if not (isinstance(expr, list) and expr):
            raise ParseError(f"bad formula {expr!r}")
        head = expr[0]
        if head == "and":
            return And(self._formula(e, scope) for e in expr[1:])
        if head == "or":
            return Or(self._formula(e, scope) for e in expr[1:])
        if head == "not":
            if len(expr) != 2:
                raise ParseError("not takes one argument")
            return Not(self._formula(expr[1], scope))
        if head == "=":
            if len(expr) != 3:
                raise ParseError("= takes two arguments")
            return Eq(self._term(expr[1], scope), self._term(expr[2], scope))
        term = self._term(expr, scope)
        if isinstance(term, (ProcApp, FixedApp, FluentApp)):
            return Holds(term)
        raise ParseError(f"formula head {head!r} is neither a connective nor a predicate")

    def _effects(self, expr, scope) -> tuple[Effect, ...]:
        if not (isinstance(expr, list) and expr):
            raise ParseError(f"bad effect {expr!r}")
        if expr[0] == "and":
            out = []
            for e in expr[1:]:
                out.extend(self._effects(e, scope))
            return tuple(out)
        if expr[0] == ":=":
            if len(expr) != 3:
                raise ParseError(":= takes two arguments")
            lhs = self._term(expr[1], scope)
            if not isinstance(lhs, FluentApp):
                raise ParseError(f"effect target {expr[1]!r} must be a fluent application")
            return (Effect(lhs, self._term(expr[2], scope)),)
        raise ParseError(f"bad effect {expr!r}, want (:= lhs rhs) or (and ...)")


def parse_problem(text: str, registry: Mapping[str, Callable] | None = None) -> Problem:
    """Parse a problem file into the data model, binding procedure symbols
    from ``registry``."""
    exprs = read_sexprs(text)
    if len(exprs) != 1:
        raise ParseError(f"expected one (define ...) form, found {len(exprs)}")
    return _ProblemReader(registry or {}).read(exprs[0])
