"""Typed state-variable planning with fixed symbols and state constraints."""

from .model import (
    ARITHMETIC, ActionSchema, And, Const, ConstraintSchema, ConstraintViolation,
    Effect, EffectConflictError, Eq, EvaluationError, FixedApp, FixedDecl,
    FluentApp, FluentDecl, Formula, FstripsError, GroundAction, GroundProblem,
    GroundingError, Holds, Not, Or, Param, ProcApp, Problem, ReplayResult,
    Signature, State, StateVarRef, Term, Truth, Type, TRUE, FALSE,
    format_var, ground,
)
from .parser import ParseError, parse_problem

__all__ = [
    "ARITHMETIC", "ActionSchema", "And", "Const", "ConstraintSchema",
    "ConstraintViolation", "Effect", "EffectConflictError", "Eq",
    "EvaluationError", "FixedApp", "FixedDecl", "FluentApp", "FluentDecl",
    "Formula", "FstripsError", "GroundAction", "GroundProblem",
    "GroundingError", "Holds", "Not", "Or", "Param", "ParseError", "ProcApp",
    "Problem", "ReplayResult", "Signature", "State", "StateVarRef", "Term",
    "Truth", "Type", "TRUE", "FALSE", "format_var", "ground", "parse_problem",
]
