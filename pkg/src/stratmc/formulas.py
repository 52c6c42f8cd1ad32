"""Temporal formulas: one AST for LTL, CTL, CTL* and mu-calculus.

Atomic propositions are terms of the builtin Prop sort; mu-calculus
modalities carry action specifications over rule labels.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import NonMonotoneFixpoint, UnboundMuVariable
from .terms import Term, pretty


class LogicClass(Enum):
    PROP = "propositional"
    LTL = "LTL"
    CTL = "CTL"
    CTLSTAR = "CTL*"
    MUCALC = "mu-calculus"


# -- action specifications for modalities -----------------------------------

@dataclass(frozen=True)
class Dot:
    """All actions, including the reserved stutter label."""


@dataclass(frozen=True)
class Labels:
    labels: tuple


@dataclass(frozen=True)
class Complement:
    labels: tuple


DOT = Dot()


# -- formula nodes -----------------------------------------------------------

@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class FalseF:
    pass


@dataclass(frozen=True)
class Atom:
    prop: Term


@dataclass(frozen=True)
class Not:
    sub: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Implies:
    left: object
    right: object


@dataclass(frozen=True)
class Iff:
    left: object
    right: object


@dataclass(frozen=True)
class Next:
    sub: object


@dataclass(frozen=True)
class Eventually:
    sub: object


@dataclass(frozen=True)
class Always:
    sub: object


@dataclass(frozen=True)
class Until:
    left: object
    right: object


@dataclass(frozen=True)
class Release:
    """Dual of Until; produced by normal forms, not by the parser."""
    left: object
    right: object


@dataclass(frozen=True)
class ForallPath:
    sub: object


@dataclass(frozen=True)
class ExistsPath:
    sub: object


@dataclass(frozen=True)
class MuVar:
    name: str


@dataclass(frozen=True)
class Mu:
    var: str
    body: object


@dataclass(frozen=True)
class Nu:
    var: str
    body: object


@dataclass(frozen=True)
class Diamond:
    spec: object
    sub: object


@dataclass(frozen=True)
class Box:
    spec: object
    sub: object


TRUE = TrueF()
FALSE = FalseF()

_BOOLEAN = (Not, And, Or, Implies, Iff)
_TEMPORAL = (Next, Eventually, Always, Until, Release)
_QUANT = (ForallPath, ExistsPath)
_MU_ONLY = (MuVar, Mu, Nu, Diamond, Box)


def subformulas(f):
    """Pre-order traversal of a formula."""
    yield f
    for name in ("sub", "left", "right", "body"):
        child = getattr(f, name, None)
        if child is not None and not isinstance(child, str):
            yield from subformulas(child)


def children(f):
    out = []
    for name in ("sub", "left", "right", "body"):
        child = getattr(f, name, None)
        if child is not None and not isinstance(child, str):
            out.append(child)
    return out


def atoms_of(f):
    """The set of atomic proposition terms occurring in a formula."""
    return {g.prop for g in subformulas(f) if isinstance(g, Atom)}


def classify(f) -> LogicClass:
    """Least logic containing the formula."""
    kinds = {type(g) for g in subformulas(f)}
    if kinds & set(_MU_ONLY):
        return LogicClass.MUCALC
    has_quant = bool(kinds & set(_QUANT))
    has_temporal = bool(kinds & set(_TEMPORAL))
    if not has_quant:
        return LogicClass.LTL if has_temporal else LogicClass.PROP
    return LogicClass.CTL if _is_ctl_state(f) else LogicClass.CTLSTAR


def _is_ctl_state(f) -> bool:
    if isinstance(f, (TrueF, FalseF, Atom)):
        return True
    if isinstance(f, _BOOLEAN):
        return all(_is_ctl_state(c) for c in children(f))
    if isinstance(f, _QUANT):
        path = f.sub
        if isinstance(path, (Next, Eventually, Always)):
            return _is_ctl_state(path.sub)
        if isinstance(path, (Until, Release)):
            return _is_ctl_state(path.left) and _is_ctl_state(path.right)
        return False
    return False


def check_mu_formula(f):
    """Reject unbound fixpoint variables and non-monotone bodies."""
    def walk(g, bound, negations):
        if isinstance(g, MuVar):
            if g.name not in bound:
                raise UnboundMuVariable(f"variable {g.name} is not bound")
            if negations.get(g.name, 0) % 2 == 1:
                raise NonMonotoneFixpoint(
                    f"variable {g.name} occurs under an odd number of negations")
            return
        if isinstance(g, (Mu, Nu)):
            walk(g.body, bound | {g.var}, {**negations, g.var: 0})
            return
        if isinstance(g, Not):
            walk(g.sub, bound, {v: n + 1 for v, n in negations.items()})
            return
        if isinstance(g, Implies):
            walk(g.left, bound, {v: n + 1 for v, n in negations.items()})
            walk(g.right, bound, negations)
            return
        if isinstance(g, Iff):
            # both polarities: every bound variable inside must be safe both ways
            for child in (g.left, g.right):
                walk(child, bound, negations)
                walk(child, bound, {v: n + 1 for v, n in negations.items()})
            return
        for child in children(g):
            walk(child, bound, negations)

    walk(f, frozenset(), {})


def pretty_formula(f) -> str:
    """Render a formula in the surface syntax."""
    return _pf(f, 100)


_PREC = {
    Iff: 80, Implies: 80, Until: 70, Or: 60, And: 50,
}


def _spec_text(spec) -> str:
    if isinstance(spec, Dot):
        return "."
    if isinstance(spec, Labels):
        return " ".join(spec.labels)
    return "~ " + " ".join(spec.labels)


def _pf(f, limit) -> str:
    def paren(text, prec):
        return f"({text})" if prec > limit else text

    if isinstance(f, TrueF):
        return "True"
    if isinstance(f, FalseF):
        return "False"
    if isinstance(f, Atom):
        return pretty(f.prop)
    if isinstance(f, MuVar):
        return f.name
    if isinstance(f, Not):
        return f"~ {_pf(f.sub, 0)}"
    if isinstance(f, And):
        return paren(f"{_pf(f.left, 50)} /\\ {_pf(f.right, 49)}", 50)
    if isinstance(f, Or):
        return paren(f"{_pf(f.left, 60)} \\/ {_pf(f.right, 59)}", 60)
    if isinstance(f, Implies):
        return paren(f"{_pf(f.left, 79)} -> {_pf(f.right, 80)}", 80)
    if isinstance(f, Iff):
        return paren(f"{_pf(f.left, 79)} <-> {_pf(f.right, 79)}", 80)
    if isinstance(f, Until):
        return paren(f"{_pf(f.left, 69)} U {_pf(f.right, 70)}", 70)
    if isinstance(f, Release):
        return paren(f"{_pf(f.left, 69)} R {_pf(f.right, 70)}", 70)
    if isinstance(f, Next):
        return f"O {_pf(f.sub, 0)}"
    if isinstance(f, Eventually):
        return f"<> {_pf(f.sub, 0)}"
    if isinstance(f, Always):
        return f"[] {_pf(f.sub, 0)}"
    if isinstance(f, ForallPath):
        return f"A {_pf(f.sub, 0)}"
    if isinstance(f, ExistsPath):
        return f"E {_pf(f.sub, 0)}"
    if isinstance(f, Mu):
        return paren(f"mu {f.var} . {_pf(f.body, 100)}", 90)
    if isinstance(f, Nu):
        return paren(f"nu {f.var} . {_pf(f.body, 100)}", 90)
    if isinstance(f, Diamond):
        return f"< {_spec_text(f.spec)} > {_pf(f.sub, 0)}"
    if isinstance(f, Box):
        return f"[ {_spec_text(f.spec)} ] {_pf(f.sub, 0)}"
    raise ValueError(f"cannot print {f!r}")
