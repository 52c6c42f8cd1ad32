"""Small-step operational semantics of the strategy language.

Execution states are a subject term plus a stack of pending strategy
and substitution frames (or a composite state rewriting selected
subterms in parallel).  Control steps advance the strategy without
touching the subject term; system steps perform one rule rewrite.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import NonTermination, UnknownStrategy
from .terms import (
    Budget, Term, apply_subst, eval_condition, match, normalize, positions,
    pretty, replace_at, rule_applications,
)

DEFAULT_STATE_BUDGET = 100000


# ---------------------------------------------------------------------------
# Strategy expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Fail:
    pass


@dataclass(frozen=True)
class RuleApp:
    label: str
    init: tuple = ()          # ((variable name, Term), ...)
    top: bool = False


@dataclass(frozen=True)
class MatchTest:
    anywhere: bool
    pattern: Term
    condition: tuple = ()


@dataclass(frozen=True)
class Concat:
    first: object
    second: object


@dataclass(frozen=True)
class Union:
    left: object
    right: object


@dataclass(frozen=True)
class Star:
    body: object


@dataclass(frozen=True)
class CondC:
    condition: object
    positive: object
    negative: object


@dataclass(frozen=True)
class MatchRew:
    anywhere: bool
    pattern: Term
    condition: tuple
    bindings: tuple           # ((variable Term, strategy), ...)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple = ()


# Derived combinators, kept in the tree so definitions print back as
# written; they expand through their core forms when executed.

@dataclass(frozen=True)
class NotC:
    body: object


@dataclass(frozen=True)
class TryC:
    body: object


@dataclass(frozen=True)
class TestC:
    body: object


@dataclass(frozen=True)
class OrElse:
    left: object
    right: object


@dataclass(frozen=True)
class Plus:
    body: object


@dataclass(frozen=True)
class Bang:
    body: object


IDLE = Idle()
FAIL = Fail()


def expand_derived(expr):
    """Core form of a derived combinator (identity on core forms)."""
    while True:
        if isinstance(expr, NotC):
            expr = CondC(expr.body, FAIL, IDLE)
        elif isinstance(expr, TryC):
            expr = CondC(expr.body, IDLE, IDLE)
        elif isinstance(expr, TestC):
            expr = NotC(NotC(expr.body))
        elif isinstance(expr, OrElse):
            expr = CondC(expr.left, IDLE, expr.right)
        elif isinstance(expr, Plus):
            expr = Concat(expr.body, Star(expr.body))
        elif isinstance(expr, Bang):
            expr = Concat(Star(expr.body), NotC(expr.body))
        else:
            return expr


@dataclass(frozen=True)
class StratDef:
    """One sd/csd definition: parameter patterns, body, optional condition."""
    params: tuple
    body: object
    condition: tuple = ()


@dataclass(frozen=True)
class Module:
    """A resolved module: flattened signature plus its strategy table."""
    signature: object
    strategies: dict          # name -> list[StratDef]

    def __hash__(self):
        return id(self)


# ---------------------------------------------------------------------------
# Execution states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SFrame:
    expr: object


@dataclass(frozen=True)
class SubstF:
    items: tuple              # sorted ((name, Term), ...)

    def as_dict(self):
        return dict(self.items)


def subst_frame(subst: dict) -> SubstF:
    return SubstF(tuple(sorted(subst.items())))


@dataclass(frozen=True)
class SimpleState:
    subject: Term
    stack: tuple


@dataclass(frozen=True)
class SubtermState:
    bindings: tuple           # ((variable name, ExecState), ...)
    context: Term             # the bound variables appear as holes
    stack: tuple


def initial_state(term: Term, strategy) -> SimpleState:
    return SimpleState(term, (SFrame(strategy),))


def is_solution(q) -> bool:
    return isinstance(q, SimpleState) and not q.stack


def cterm(q, sig, budget: Budget | None = None) -> Term:
    """The subject term being rewritten inside an execution state."""
    if isinstance(q, SimpleState):
        return q.subject
    inst = {x: cterm(sub, sig, budget) for x, sub in q.bindings}
    return normalize(apply_subst(inst, q.context, sig), sig, budget)


def leftmost_subst(stack) -> dict:
    for frame in stack:
        if isinstance(frame, SubstF):
            return frame.as_dict()
    return {}


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------
#
# A step is reported as the applied rule label (a system step) or None
# (a control step).

def step_successors(q, module: Module, states_budget: int = DEFAULT_STATE_BUDGET):
    """The exact one-step successors of an execution state.

    Returns a list of (label-or-None, state) pairs in a deterministic
    order; labels mark system steps, None marks control steps.
    """
    sig = module.signature

    if isinstance(q, SubtermState):
        if all(is_solution(sub) for _, sub in q.bindings):
            inst = {x: sub.subject for x, sub in q.bindings}
            merged = normalize(apply_subst(inst, q.context, sig), sig)
            return [(None, SimpleState(merged, q.stack))]
        out = []
        for i, (x, sub) in enumerate(q.bindings):
            for step, sub2 in step_successors(sub, module, states_budget):
                bindings = q.bindings[:i] + ((x, sub2),) + q.bindings[i + 1:]
                out.append((step, SubtermState(bindings, q.context, q.stack)))
        return out

    if not q.stack:
        return []  # solution
    head, rest = q.stack[0], q.stack[1:]
    if isinstance(head, SubstF):
        return [(None, SimpleState(q.subject, rest))]

    expr = expand_derived(head.expr)
    t = q.subject

    if isinstance(expr, Idle):
        return [(None, SimpleState(t, rest))]
    if isinstance(expr, Fail):
        return []
    if isinstance(expr, Concat):
        return [(None, SimpleState(t, (SFrame(expr.first), SFrame(expr.second)) + rest))]
    if isinstance(expr, Union):
        return [
            (None, SimpleState(t, (SFrame(expr.left),) + rest)),
            (None, SimpleState(t, (SFrame(expr.right),) + rest)),
        ]
    if isinstance(expr, Star):
        return [
            (None, SimpleState(t, (SFrame(expr.body), SFrame(expr)) + rest)),
            (None, SimpleState(t, rest)),
        ]
    if isinstance(expr, RuleApp):
        theta = leftmost_subst(rest)
        init = {x: apply_subst(theta, v, sig) for x, v in expr.init}
        out = []
        for label, result in rule_applications(t, sig, expr.label, init, expr.top):
            out.append((label, SimpleState(result, rest)))
        return out
    if isinstance(expr, MatchTest):
        theta = leftmost_subst(rest)
        if _test_holds(expr, t, sig, theta):
            return [(None, SimpleState(t, rest))]
        return []
    if isinstance(expr, CondC):
        theta = leftmost_subst(rest)
        out = [(None, SimpleState(t, (SFrame(expr.condition), SFrame(expr.positive)) + rest))]
        if not _condition_succeeds(t, expr.condition, theta, module, states_budget):
            out.append((None, SimpleState(t, (SFrame(expr.negative),) + rest)))
        return out
    if isinstance(expr, MatchRew):
        return _matchrew_successors(expr, t, rest, module)
    if isinstance(expr, Call):
        theta = leftmost_subst(rest)
        defs = module.strategies.get(expr.name)
        if defs is None:
            raise UnknownStrategy(f"call to undeclared strategy {expr.name!r}")
        inst_args = [apply_subst(theta, a, sig) for a in expr.args]
        out = []
        for d in defs:
            if len(d.params) != len(inst_args):
                continue
            for sub in _match_params(d.params, inst_args, sig):
                for sub2 in eval_condition(d.condition, sub, sig):
                    # the frame also scopes the definition body: variables
                    # of enclosing definitions are not visible inside
                    frames = (SFrame(d.body), subst_frame(sub2))
                    out.append((None, SimpleState(t, frames + rest)))
        return out
    raise UnknownStrategy(f"cannot execute strategy node {expr!r}")


def _match_params(params, args, sig):
    states = [{}]
    for p, a in zip(params, args):
        states = [s2 for s1 in states for s2 in match(p, a, sig, s1)]
        if not states:
            return
    seen = set()
    for s in states:
        key = tuple(sorted(s.items()))
        if key not in seen:
            seen.add(key)
            yield s


def _test_holds(test: MatchTest, t, sig, theta):
    spots = positions(t) if test.anywhere else [((), t)]
    for _, sub in spots:
        for s in match(test.pattern, sub, sig, theta):
            for _ in eval_condition(test.condition, s, sig):
                return True
    return False


def _matchrew_successors(expr: MatchRew, t, rest, module):
    sig = module.signature
    theta = leftmost_subst(rest)
    hole_vars = [v for v, _ in expr.bindings]
    hole_names = {v.symbol for v in hole_vars}
    out = []
    spots = positions(t) if expr.anywhere else [((), t)]
    for path, sub in spots:
        for s in match(expr.pattern, sub, sig, theta):
            for s2 in eval_condition(expr.condition, s, sig):
                ctx_subst = {x: v for x, v in s2.items() if x not in hole_names}
                local = apply_subst(ctx_subst, expr.pattern, sig)
                context = replace_at(t, path, local, sig)
                members = []
                ok = True
                for v, strat in expr.bindings:
                    picked = s2.get(v.symbol)
                    if picked is None:
                        ok = False
                        break
                    frames = (SFrame(strat),)
                    if s2:
                        frames += (subst_frame(s2),)
                    members.append((v.symbol, SimpleState(picked, frames)))
                if ok:
                    out.append((None, SubtermState(tuple(members), context, rest)))
    return out


def _condition_succeeds(t, condition, theta, module, states_budget):
    """Isolated exhaustive sub-derivation: does the condition strategy
    produce any solution from this subject term?"""
    frames = (SFrame(condition),)
    if theta:
        frames += (subst_frame(theta),)
    start = SimpleState(t, frames)
    visited = {start}
    queue = [start]
    while queue:
        state = queue.pop()
        if is_solution(state):
            return True
        for _, nxt in step_successors(state, module, states_budget):
            if nxt not in visited:
                visited.add(nxt)
                if len(visited) > states_budget:
                    raise NonTermination(
                        f"condition sub-derivation exceeded {states_budget} states")
                queue.append(nxt)
    return False


# ---------------------------------------------------------------------------
# The rewrite-after-control relation
# ---------------------------------------------------------------------------

def opsem_successors(q, module: Module, states_budget: int = DEFAULT_STATE_BUDGET):
    """Successors under one system step preceded by any control steps.

    Returns (successors, can_stop) where successors is a deduplicated
    list of (label, state) pairs in depth-first discovery order and
    can_stop tells whether a solution is control-reachable from q.
    """
    visited = {q}
    seen = set()
    out = []
    can_stop = is_solution(q)
    work = [iter(step_successors(q, module, states_budget))]
    while work:
        try:
            step, nxt = next(work[-1])
        except StopIteration:
            work.pop()
            continue
        if step is None:
            if nxt not in visited:
                visited.add(nxt)
                if len(visited) > states_budget:
                    raise NonTermination(
                        f"control closure exceeded {states_budget} states")
                if is_solution(nxt):
                    can_stop = True
                work.append(iter(step_successors(nxt, module, states_budget)))
        else:
            key = (step, nxt)
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out, can_stop


def srewrite(module: Module, term: Term, strategy,
             states_budget: int = DEFAULT_STATE_BUDGET):
    """Results of the strategic rewriting: the subject terms of all
    reachable states from which the strategy can stop."""
    sig = module.signature
    root = initial_state(normalize(term, sig), strategy)
    results = []
    seen_terms = set()
    visited = {root}
    queue = [root]
    while queue:
        state = queue.pop(0)
        succs, can_stop = opsem_successors(state, module, states_budget)
        if can_stop:
            t = cterm(state, sig)
            if t not in seen_terms:
                seen_terms.add(t)
                results.append(t)
        for _, nxt in succs:
            if nxt not in visited:
                visited.add(nxt)
                if len(visited) > states_budget:
                    raise NonTermination(
                        f"strategic rewriting exceeded {states_budget} states")
                queue.append(nxt)
    return results


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

_LEVELS = {Concat: 2, Union: 3, OrElse: 4, CondC: 5}


def _level_of(expr):
    return _LEVELS.get(type(expr), 0 if not isinstance(expr, (Star, Plus, Bang)) else 1)


def pretty_strategy(expr) -> str:
    """Render a strategy expression with minimal parentheses."""
    def wrap(e, limit):
        s = pretty_strategy(e)
        return f"({s})" if _level_of(e) > limit else s

    if isinstance(expr, Idle):
        return "idle"
    if isinstance(expr, Fail):
        return "fail"
    if isinstance(expr, RuleApp):
        text = expr.label
        if expr.init:
            inner = ", ".join(f"{x} <- {pretty(v)}" for x, v in expr.init)
            text += f"[{inner}]"
        if expr.top:
            text = f"top({text})"
        return text
    if isinstance(expr, MatchTest):
        kw = "amatch" if expr.anywhere else "match"
        return f"{kw} {pretty(expr.pattern)}{_cond_text(expr.condition)}"
    if isinstance(expr, Concat):
        return f"{wrap(expr.first, 1)} ; {wrap(expr.second, 2)}"
    if isinstance(expr, Union):
        return f"{wrap(expr.left, 2)} | {wrap(expr.right, 3)}"
    if isinstance(expr, OrElse):
        return f"{wrap(expr.left, 3)} or-else {wrap(expr.right, 4)}"
    if isinstance(expr, Star):
        return f"{wrap(expr.body, 0)} *"
    if isinstance(expr, Plus):
        return f"{wrap(expr.body, 0)} +"
    if isinstance(expr, Bang):
        return f"{wrap(expr.body, 0)} !"
    if isinstance(expr, CondC):
        return (f"{wrap(expr.condition, 4)} ? {wrap(expr.positive, 4)}"
                f" : {wrap(expr.negative, 5)}")
    if isinstance(expr, NotC):
        return f"not({pretty_strategy(expr.body)})"
    if isinstance(expr, TryC):
        return f"try({pretty_strategy(expr.body)})"
    if isinstance(expr, TestC):
        return f"test({pretty_strategy(expr.body)})"
    if isinstance(expr, MatchRew):
        kw = "amatchrew" if expr.anywhere else "matchrew"
        by = ", ".join(f"{v.symbol} using {pretty_strategy(s)}" for v, s in expr.bindings)
        return f"{kw} {pretty(expr.pattern)}{_cond_text(expr.condition)} by {by}"
    if isinstance(expr, Call):
        if expr.args:
            return f"{expr.name}({', '.join(pretty(a) for a in expr.args)})"
        return expr.name
    raise ValueError(f"cannot print {expr!r}")


def _cond_text(cond) -> str:
    if not cond:
        return ""
    from .terms import BoolFrag, EqualityFrag, MatchFrag
    parts = []
    for frag in cond:
        if isinstance(frag, EqualityFrag):
            parts.append(f"{pretty(frag.lhs)} = {pretty(frag.rhs)}")
        elif isinstance(frag, MatchFrag):
            parts.append(f"{pretty(frag.pattern)} := {pretty(frag.subject)}")
        else:
            parts.append(pretty(frag.term))
    return " s.t. " + " /\\ ".join(parts)
