"""Mu-calculus checking: formula x graph -> parity game -> Zielonka.

Modalities carry action specifications over rule labels; the reserved
stutter label participates in the dot and in complemented lists but is
never listable by name.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import formulas as F
from .errors import NonMonotoneFixpoint
from .kripke import KripkeGraph

EVEN, ODD = 0, 1


# ---------------------------------------------------------------------------
# Positive normal form
# ---------------------------------------------------------------------------

def to_positive_normal_form(f):
    """Push negations to the atoms through the modal and fixpoint
    dualities; raises NonMonotoneFixpoint when a negated bound
    variable survives."""
    def walk(g, neg, flipped):
        if isinstance(g, F.TrueF):
            return F.FALSE if neg else F.TRUE
        if isinstance(g, F.FalseF):
            return F.TRUE if neg else F.FALSE
        if isinstance(g, F.Atom):
            return F.Not(g) if neg else g
        if isinstance(g, F.MuVar):
            if neg != flipped.get(g.name, False):
                raise NonMonotoneFixpoint(
                    f"variable {g.name} occurs under an odd number of negations")
            return g
        if isinstance(g, F.Not):
            return walk(g.sub, not neg, flipped)
        if isinstance(g, F.And):
            mk = F.Or if neg else F.And
            return mk(walk(g.left, neg, flipped), walk(g.right, neg, flipped))
        if isinstance(g, F.Or):
            mk = F.And if neg else F.Or
            return mk(walk(g.left, neg, flipped), walk(g.right, neg, flipped))
        if isinstance(g, F.Implies):
            return walk(F.Or(F.Not(g.left), g.right), neg, flipped)
        if isinstance(g, F.Iff):
            both = F.And(g.left, g.right)
            none = F.And(F.Not(g.left), F.Not(g.right))
            return walk(F.Or(both, none), neg, flipped)
        if isinstance(g, F.Diamond):
            mk = F.Box if neg else F.Diamond
            return mk(g.spec, walk(g.sub, neg, flipped))
        if isinstance(g, F.Box):
            mk = F.Diamond if neg else F.Box
            return mk(g.spec, walk(g.sub, neg, flipped))
        if isinstance(g, (F.Mu, F.Nu)):
            flipped2 = dict(flipped)
            flipped2[g.var] = neg
            body = walk(g.body, neg, flipped2)
            if neg:
                mk = F.Nu if isinstance(g, F.Mu) else F.Mu
            else:
                mk = type(g)
            return mk(g.var, body)
        raise ValueError(f"not a mu-calculus formula: {g!r}")

    return walk(f, False, {})


def alternation_priorities(f):
    """Max-parity priorities for each fixpoint subformula: least fixpoints
    odd, greatest even, outer binders at least as high as inner ones."""
    pri = {}

    def walk(g):
        best = 0
        for child in F.children(g):
            best = max(best, walk(child))
        if isinstance(g, F.Mu):
            p = best if best % 2 == 1 else best + 1
            pri[g] = p
            return p
        if isinstance(g, F.Nu):
            p = best if best % 2 == 0 else best + 1
            pri[g] = p
            return p
        return best

    walk(f)
    return pri


def alpha_rename(f):
    """Give every fixpoint binder a unique variable name."""
    counter = [0]

    def walk(g, scope):
        if isinstance(g, F.MuVar):
            return F.MuVar(scope[g.name])
        if isinstance(g, (F.Mu, F.Nu)):
            counter[0] += 1
            fresh = f"{g.var}#{counter[0]}"
            return type(g)(fresh, walk(g.body, {**scope, g.var: fresh}))
        if isinstance(g, (F.TrueF, F.FalseF, F.Atom)):
            return g
        if isinstance(g, (F.Diamond, F.Box)):
            return type(g)(g.spec, walk(g.sub, scope))
        parts = {}
        for name in ("sub", "left", "right"):
            child = getattr(g, name, None)
            if child is not None:
                parts[name] = walk(child, scope)
        return type(g)(**parts)

    return walk(f, {})


# ---------------------------------------------------------------------------
# Parity games
# ---------------------------------------------------------------------------

@dataclass
class ParityGame:
    owners: list          # EVEN or ODD per vertex
    priorities: list
    edges: list           # list of successor index lists

    def __len__(self):
        return len(self.owners)


def _spec_matches(spec, action):
    if isinstance(spec, F.Dot):
        return True
    if isinstance(spec, F.Labels):
        return action in spec.labels
    return action not in spec.labels


def build_parity_game(graph: KripkeGraph, formula):
    """Standard evaluation game for a formula in positive normal form.

    Vertices pair a graph state with a subformula; disjunctions and
    diamonds belong to the verifier, conjunctions and boxes to the
    refuter; fixpoint vertices carry the alternation priorities.
    Returns (game, root vertex).
    """
    formula = alpha_rename(formula)
    pri = alternation_priorities(formula)
    binders = {g.var: g for g in F.subformulas(formula) if isinstance(g, (F.Mu, F.Nu))}

    owners, priorities, edges = [], [], []
    index = {}

    def vertex(state, node):
        key = (state, node)
        known = index.get(key)
        if known is not None:
            return known
        idx = len(owners)
        index[key] = idx
        owners.append(EVEN)
        priorities.append(0)
        edges.append(None)
        _fill(idx, state, node)
        return idx

    def sink(idx, owner):
        owners[idx] = owner
        priorities[idx] = 1 if owner == EVEN else 0
        edges[idx] = [idx]

    def _fill(idx, state, node):
        if isinstance(node, F.TrueF):
            sink(idx, ODD)
            return
        if isinstance(node, F.FalseF):
            sink(idx, EVEN)
            return
        if isinstance(node, F.Atom):
            sink(idx, ODD if graph.eval_prop(state, node.prop) else EVEN)
            return
        if isinstance(node, F.Not):  # literal in PNF
            sink(idx, EVEN if graph.eval_prop(state, node.sub.prop) else ODD)
            return
        if isinstance(node, F.And):
            owners[idx] = ODD
            edges[idx] = [vertex(state, node.left), vertex(state, node.right)]
            return
        if isinstance(node, F.Or):
            owners[idx] = EVEN
            edges[idx] = [vertex(state, node.left), vertex(state, node.right)]
            return
        if isinstance(node, (F.Diamond, F.Box)):
            owner = EVEN if isinstance(node, F.Diamond) else ODD
            owners[idx] = owner
            targets = []
            for action, nxt in graph.successors(state):
                if _spec_matches(node.spec, action):
                    v = vertex(nxt, node.sub)
                    if v not in targets:
                        targets.append(v)
            if targets:
                edges[idx] = targets
            else:
                sink(idx, owner)
            return
        if isinstance(node, (F.Mu, F.Nu)):
            owners[idx] = EVEN
            priorities[idx] = pri[node]
            edges[idx] = [vertex(state, node.body)]
            return
        if isinstance(node, F.MuVar):
            owners[idx] = EVEN
            edges[idx] = [vertex(state, binders[node.name])]
            return
        raise ValueError(f"not in positive normal form: {node!r}")

    root = vertex(graph.initial, formula)
    return ParityGame(owners, priorities, edges), root


# ---------------------------------------------------------------------------
# Zielonka's algorithm
# ---------------------------------------------------------------------------

def _attractor(game: ParityGame, player, target, region):
    """Vertices in the region from which the player can force the target."""
    attr = set(target)
    out_count = {}
    for v in region:
        if v in attr:
            continue
        out_count[v] = sum(1 for w in game.edges[v] if w in region)
    queue = list(target)
    rev = {v: [] for v in region}
    for v in region:
        for w in game.edges[v]:
            if w in region:
                rev[w].append(v)
    while queue:
        w = queue.pop()
        for v in rev[w]:
            if v in attr:
                continue
            if game.owners[v] == player:
                attr.add(v)
                queue.append(v)
            else:
                out_count[v] -= 1
                if out_count[v] == 0:
                    attr.add(v)
                    queue.append(v)
    return attr


def zielonka(game: ParityGame):
    """Exact winning regions by recursive attractor decomposition.

    Max-parity convention: the verifier wins an infinite play iff the
    highest priority seen infinitely often is even.
    """
    def solve(region):
        if not region:
            return set(), set()
        p = max(game.priorities[v] for v in region)
        player = EVEN if p % 2 == 0 else ODD
        target = {v for v in region if game.priorities[v] == p}
        a = _attractor(game, player, target, region)
        w0, w1 = solve(region - a)
        own, opp = (w0, w1) if player == EVEN else (w1, w0)
        if not opp:
            full = set(region)
            return (full, set()) if player == EVEN else (set(), full)
        b = _attractor(game, 1 - player, opp, region)
        w0b, w1b = solve(region - b)
        if player == EVEN:
            return w0b, w1b | b
        return w0b | b, w1b

    even_win, odd_win = solve(set(range(len(game))))
    winners = [ODD] * len(game)
    for v in even_win:
        winners[v] = EVEN
    return winners


def check_mu(graph: KripkeGraph, formula) -> bool:
    """The verifier wins the evaluation game from (initial state, formula)."""
    ok, _ = check_mu_with_stats(graph, formula)
    return ok


def check_mu_with_stats(graph: KripkeGraph, formula):
    """Like check_mu, also reporting the number of game vertices."""
    pnf = to_positive_normal_form(formula)
    game, root = build_parity_game(graph, pnf)
    winners = zielonka(game)
    return winners[root] == EVEN, len(game)
