"""Linear-time and branching-time checking on materialized graphs.

LTL goes through a tableau translation to Büchi automata and a nested
depth-first product emptiness search with lasso counterexamples.  CTL
uses fixpoint labeling.  CTL* reduces path-quantified blocks to LTL
emptiness run from every state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import formulas as F
from .kripke import STUTTER, KripkeGraph
from .terms import Term, pretty


# ---------------------------------------------------------------------------
# Negation normal form over path formulas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynAtom:
    """Internal atom standing for an already-solved state subformula."""
    index: int


def _is_literal(f):
    return isinstance(f, (F.TrueF, F.FalseF, F.Atom, SynAtom)) or (
        isinstance(f, F.Not) and isinstance(f.sub, (F.Atom, SynAtom)))


def nnf(f, neg=False):
    """Push negations to the atoms; F/G become Until/Release."""
    if isinstance(f, F.TrueF):
        return F.FALSE if neg else F.TRUE
    if isinstance(f, F.FalseF):
        return F.TRUE if neg else F.FALSE
    if isinstance(f, (F.Atom, SynAtom)):
        return F.Not(f) if neg else f
    if isinstance(f, F.Not):
        return nnf(f.sub, not neg)
    if isinstance(f, F.And):
        mk = F.Or if neg else F.And
        return mk(nnf(f.left, neg), nnf(f.right, neg))
    if isinstance(f, F.Or):
        mk = F.And if neg else F.Or
        return mk(nnf(f.left, neg), nnf(f.right, neg))
    if isinstance(f, F.Implies):
        return nnf(F.Or(F.Not(f.left), f.right), neg)
    if isinstance(f, F.Iff):
        both = F.And(f.left, f.right)
        none = F.And(F.Not(f.left), F.Not(f.right))
        return nnf(F.Or(both, none), neg)
    if isinstance(f, F.Next):
        return F.Next(nnf(f.sub, neg))
    if isinstance(f, F.Eventually):
        if neg:
            return F.Release(F.FALSE, nnf(f.sub, True))
        return F.Until(F.TRUE, nnf(f.sub))
    if isinstance(f, F.Always):
        if neg:
            return F.Until(F.TRUE, nnf(f.sub, True))
        return F.Release(F.FALSE, nnf(f.sub))
    if isinstance(f, F.Until):
        mk = F.Release if neg else F.Until
        return mk(nnf(f.left, neg), nnf(f.right, neg))
    if isinstance(f, F.Release):
        mk = F.Until if neg else F.Release
        return mk(nnf(f.left, neg), nnf(f.right, neg))
    raise ValueError(f"not a path formula: {f!r}")


# ---------------------------------------------------------------------------
# Tableau construction of a Büchi automaton
# ---------------------------------------------------------------------------

@dataclass
class BuchiAutomaton:
    """Guards are (positive atoms, negative atoms) conjunctions; a run
    consumes one valuation per step on the transition it follows."""
    n_states: int
    initial: int
    transitions: list            # per state: [(pos frozenset, neg frozenset, dst)]
    accepting: frozenset

    def guard_holds(self, pos, neg, valuation):
        return pos <= valuation and not (neg & valuation)


class _Node:
    __slots__ = ("id", "incoming", "new", "old", "next")

    def __init__(self, nid, incoming, new, old, nxt):
        self.id = nid
        self.incoming = set(incoming)
        self.new = set(new)
        self.old = set(old)
        self.next = set(nxt)


_INIT = -1


def ltl_to_buchi(phi) -> BuchiAutomaton:
    """Tableau translation; the language is exactly the models of phi."""
    phi = nnf(phi)
    nodes = []
    counter = [0]

    def fresh(incoming, new, old, nxt):
        counter[0] += 1
        return _Node(counter[0], incoming, new, old, nxt)

    def expand(node):
        if not node.new:
            for other in nodes:
                if other.old == node.old and other.next == node.next:
                    other.incoming |= node.incoming
                    return
            nodes.append(node)
            expand(fresh({node.id}, node.next, set(), set()))
            return
        eta = min(node.new, key=repr)
        node.new.discard(eta)
        if isinstance(eta, F.FalseF):
            return
        if _is_literal(eta):
            negated = eta.sub if isinstance(eta, F.Not) else F.Not(eta)
            if negated in node.old:
                return
            node.old.add(eta)
            expand(node)
            return
        if isinstance(eta, F.TrueF):
            node.old.add(eta)
            expand(node)
            return
        if isinstance(eta, F.And):
            node.old.add(eta)
            node.new |= {eta.left, eta.right} - node.old
            expand(node)
            return
        if isinstance(eta, F.Or):
            left = fresh(node.incoming, node.new | ({eta.left} - node.old),
                         node.old | {eta}, node.next)
            right = fresh(node.incoming, node.new | ({eta.right} - node.old),
                          node.old | {eta}, node.next)
            expand(left)
            expand(right)
            return
        if isinstance(eta, F.Until):
            one = fresh(node.incoming, node.new | ({eta.left} - node.old),
                        node.old | {eta}, node.next | {eta})
            two = fresh(node.incoming, node.new | ({eta.right} - node.old),
                        node.old | {eta}, node.next)
            expand(one)
            expand(two)
            return
        if isinstance(eta, F.Release):
            one = fresh(node.incoming, node.new | ({eta.right} - node.old),
                        node.old | {eta}, node.next | {eta})
            two = fresh(node.incoming, node.new | ({eta.left, eta.right} - node.old),
                        node.old | {eta}, node.next)
            expand(one)
            expand(two)
            return
        if isinstance(eta, F.Next):
            node.old.add(eta)
            node.next.add(eta.sub)
            expand(node)
            return
        raise ValueError(f"unexpected formula in tableau: {eta!r}")

    expand(fresh({_INIT}, {phi}, set(), set()))

    untils = sorted({g for n in nodes for g in n.old if isinstance(g, F.Until)},
                    key=repr)
    # generalized acceptance: one set per until subformula
    acc_sets = [
        {n.id for n in nodes if u not in n.old or u.right in n.old}
        for u in untils
    ]

    # map tableau ids to dense indices; 0 is the virtual initial state
    ids = [_INIT] + [n.id for n in nodes]
    dense = {nid: i for i, nid in enumerate(ids)}
    raw_edges = {i: [] for i in range(len(ids))}
    for n in nodes:
        pos = frozenset(g for g in n.old if isinstance(g, (F.Atom, SynAtom)))
        neg = frozenset(g.sub for g in n.old if isinstance(g, F.Not))
        for src in n.incoming:
            raw_edges[dense[src]].append((pos, neg, dense[n.id]))

    k = len(acc_sets)
    n_plain = len(ids)
    if k == 0:
        transitions = [raw_edges[i] for i in range(n_plain)]
        return BuchiAutomaton(n_plain, 0, transitions, frozenset(range(n_plain)))

    in_set = [
        {dense[nid] for nid in acc}
        for acc in acc_sets
    ]

    # counter degeneralization: the counter advances when the source
    # state lies in the awaited acceptance set; accepting states are
    # those about to complete a round.
    def dstate(i, c):
        return c * n_plain + i

    transitions = [[] for _ in range(n_plain * k)]
    for c in range(k):
        for i in range(n_plain):
            c2 = (c + 1) % k if i in in_set[c] else c
            for pos, neg, dst in raw_edges[i]:
                transitions[dstate(i, c)].append((pos, neg, dstate(dst, c2)))
    accepting = frozenset(dstate(i, k - 1) for i in in_set[k - 1])
    return BuchiAutomaton(n_plain * k, dstate(0, 0), transitions, accepting)


# ---------------------------------------------------------------------------
# Product emptiness with lasso counterexamples
# ---------------------------------------------------------------------------

@dataclass
class Lasso:
    """A violating execution: finite prefix followed by a repeated cycle.

    Both parts are lists of (state term, outgoing action); the last
    entry of the cycle moves back to its first entry.
    """
    prefix: list
    cycle: list


def _atom_true(graph, syn_sets, state, atom):
    if isinstance(atom, SynAtom):
        return state in syn_sets[atom.index]
    return graph.eval_prop(state, atom.prop)


def _guard_holds(graph, syn_sets, state, pos, neg):
    return (all(_atom_true(graph, syn_sets, state, a) for a in pos)
            and not any(_atom_true(graph, syn_sets, state, a) for a in neg))


def _product_entries(graph, auto, syn_sets, state):
    out = []
    for pos, neg, q in auto.transitions[auto.initial]:
        if _guard_holds(graph, syn_sets, state, pos, neg):
            node = (state, q)
            if node not in out:
                out.append(node)
    return out


def _product_successors(graph, auto, syn_sets, node):
    s, q = node
    out = []
    for action, s2 in graph.successors(s):
        for pos, neg, q2 in auto.transitions[q]:
            if _guard_holds(graph, syn_sets, s2, pos, neg):
                entry = (action, (s2, q2))
                if entry not in out:
                    out.append(entry)
    return out


def find_accepting_lasso(graph, auto, syn_sets=None, start=None):
    """Nested depth-first search for an accepting cycle in the product.

    Returns (prefix, cycle) as lists of (graph state, action) pairs, or
    None when the product language is empty.  The search is
    deterministic: successors are explored in construction order and
    the inner search starts from accepting states in postorder.
    """
    syn_sets = syn_sets or []
    start = graph.initial if start is None else start

    def succ(node):
        return _product_successors(graph, auto, syn_sets, node)

    blue = set()
    red = set()

    for root in _product_entries(graph, auto, syn_sets, start):
        if root in blue:
            continue
        path = [root]
        path_index = {root: 0}
        actions = []
        iters = [iter(succ(root))]
        while iters:
            step = next(iters[-1], None)
            if step is None:
                node = path[-1]
                if node[1] in auto.accepting:
                    hit = _red_search(node, path_index, red, succ)
                    if hit is not None:
                        seg, target = hit
                        t = path_index[target]
                        prefix = [(path[i], actions[i]) for i in range(t)]
                        cycle = [(path[i], actions[i]) for i in range(t, len(path) - 1)]
                        cycle += seg
                        project = lambda part: [(graph.term(n[0]), a) for n, a in part]
                        return project(prefix), project(cycle)
                iters.pop()
                blue.add(node)
                del path_index[node]
                path.pop()
                if actions:
                    actions.pop()
                continue
            action, child = step
            if child not in blue and child not in path_index:
                path.append(child)
                path_index[child] = len(path) - 1
                actions.append(action)
                iters.append(iter(succ(child)))
    return None


def _red_search(seed, path_index, red, succ):
    """Inner search: a path from the seed back to the outer stack."""
    nodes = [seed]
    iters = [iter(succ(seed))]
    acts = []
    red.add(seed)
    while nodes:
        step = next(iters[-1], None)
        if step is None:
            nodes.pop()
            iters.pop()
            if acts:
                acts.pop()
            continue
        action, child = step
        if child in path_index:
            seg = [(nodes[i], acts[i]) for i in range(len(acts))]
            seg.append((nodes[-1], action))
            return seg, child
        if child not in red:
            red.add(child)
            nodes.append(child)
            acts.append(action)
            iters.append(iter(succ(child)))
    return None


# ---------------------------------------------------------------------------
# LTL
# ---------------------------------------------------------------------------

def check_ltl(graph: KripkeGraph, formula):
    """Check an LTL (or propositional) formula on every infinite path.

    Returns (True, None) when the property holds, or (False, lasso)
    with a violating execution.
    """
    auto = ltl_to_buchi(F.Not(formula))
    found = find_accepting_lasso(graph, auto)
    if found is None:
        return True, None
    prefix, cycle = found
    return False, Lasso(prefix, cycle)


def render_counterexample(lasso: Lasso) -> str:
    """Maude-style counterexample text; stutter moves print as 'deadlock."""
    def block(part):
        return "\n".join("  {%s,'%s}" % (pretty(t), _label(a)) for t, a in part)

    return "counterexample(\n%s,\n%s)" % (block(lasso.prefix), block(lasso.cycle))


def _label(action):
    return "deadlock" if action == STUTTER else action


# ---------------------------------------------------------------------------
# CTL (fixpoint labeling)
# ---------------------------------------------------------------------------

def check_ctl(graph: KripkeGraph, formula) -> bool:
    """Bottom-up labeling through the EX / EU / EG normal form."""
    return graph.initial in _ctl_sat(graph, formula)


def _ctl_sat(graph, f):
    n = len(graph)
    everything = set(range(n))

    def ex(target):
        return {s for s in range(n)
                if any(t in target for _, t in graph.successors(s))}

    def eu(left, right):
        sat = set(right)
        frontier = list(right)
        while frontier:
            t = frontier.pop()
            for s in range(n):
                if s not in sat and s in left and \
                        any(u == t for _, u in graph.successors(s)):
                    sat.add(s)
                    frontier.append(s)
        return sat

    def eg(inside):
        sat = set(inside)
        changed = True
        while changed:
            changed = False
            for s in list(sat):
                if not any(t in sat for _, t in graph.successors(s)):
                    sat.discard(s)
                    changed = True
        return sat

    def sat(f):
        if isinstance(f, F.TrueF):
            return set(everything)
        if isinstance(f, F.FalseF):
            return set()
        if isinstance(f, F.Atom):
            return {s for s in range(n) if graph.eval_prop(s, f.prop)}
        if isinstance(f, SynAtom):
            raise ValueError("internal atom outside CTL* solving")
        if isinstance(f, F.Not):
            return everything - sat(f.sub)
        if isinstance(f, F.And):
            return sat(f.left) & sat(f.right)
        if isinstance(f, F.Or):
            return sat(f.left) | sat(f.right)
        if isinstance(f, F.Implies):
            return (everything - sat(f.left)) | sat(f.right)
        if isinstance(f, F.Iff):
            a, b = sat(f.left), sat(f.right)
            return (a & b) | ((everything - a) & (everything - b))
        if isinstance(f, F.ExistsPath):
            p = f.sub
            if isinstance(p, F.Next):
                return ex(sat(p.sub))
            if isinstance(p, F.Eventually):
                return eu(everything, sat(p.sub))
            if isinstance(p, F.Always):
                return eg(sat(p.sub))
            if isinstance(p, F.Until):
                return eu(sat(p.left), sat(p.right))
            raise ValueError(f"not a CTL path operand: {p!r}")
        if isinstance(f, F.ForallPath):
            p = f.sub
            if isinstance(p, F.Next):
                return everything - ex(everything - sat(p.sub))
            if isinstance(p, F.Eventually):
                return everything - eg(everything - sat(p.sub))
            if isinstance(p, F.Always):
                return everything - eu(everything, everything - sat(p.sub))
            if isinstance(p, F.Until):
                nl, nr = everything - sat(p.left), everything - sat(p.right)
                bad = eu(nr, nl & nr) | eg(nr)
                return everything - bad
            raise ValueError(f"not a CTL path operand: {p!r}")
        raise ValueError(f"not a CTL formula: {f!r}")

    return sat(f)


# ---------------------------------------------------------------------------
# CTL* (recursive reduction to per-state LTL emptiness)
# ---------------------------------------------------------------------------

def check_ctl_star(graph: KripkeGraph, formula) -> bool:
    """Solve innermost path-quantified blocks by LTL emptiness from
    every state, replacing them with internal atoms, then decide the
    remaining formula at the initial state."""
    syn_sets = []

    def rewrite(f):
        if isinstance(f, (F.TrueF, F.FalseF, F.Atom, SynAtom)):
            return f
        if isinstance(f, (F.ExistsPath, F.ForallPath)):
            body = rewrite(f.sub)
            if isinstance(f, F.ExistsPath):
                sat = _sat_exists(graph, body, syn_sets)
            else:
                sat = set(range(len(graph))) - _sat_exists(graph, F.Not(body), syn_sets)
            syn_sets.append(sat)
            return SynAtom(len(syn_sets) - 1)
        parts = {}
        for name in ("sub", "left", "right"):
            child = getattr(f, name, None)
            if child is not None:
                parts[name] = rewrite(child)
        return type(f)(**parts)

    top = rewrite(formula)
    if _temporal_free(top):
        return _eval_boolean(graph, syn_sets, graph.initial, top)
    # top-level path formula: implicitly quantified over all paths
    return graph.initial not in _sat_exists(graph, F.Not(top), syn_sets)


def _temporal_free(f):
    return all(not isinstance(g, (F.Next, F.Eventually, F.Always, F.Until, F.Release))
               for g in F.subformulas(f))


def _eval_boolean(graph, syn_sets, state, f):
    if isinstance(f, F.TrueF):
        return True
    if isinstance(f, F.FalseF):
        return False
    if isinstance(f, (F.Atom, SynAtom)):
        return _atom_true(graph, syn_sets, state, f)
    if isinstance(f, F.Not):
        return not _eval_boolean(graph, syn_sets, state, f.sub)
    if isinstance(f, F.And):
        return (_eval_boolean(graph, syn_sets, state, f.left)
                and _eval_boolean(graph, syn_sets, state, f.right))
    if isinstance(f, F.Or):
        return (_eval_boolean(graph, syn_sets, state, f.left)
                or _eval_boolean(graph, syn_sets, state, f.right))
    if isinstance(f, F.Implies):
        return (not _eval_boolean(graph, syn_sets, state, f.left)
                or _eval_boolean(graph, syn_sets, state, f.right))
    if isinstance(f, F.Iff):
        return (_eval_boolean(graph, syn_sets, state, f.left)
                == _eval_boolean(graph, syn_sets, state, f.right))
    raise ValueError(f"not a boolean formula: {f!r}")


def _sat_exists(graph, path_formula, syn_sets):
    """States with some path satisfying the quantifier-free formula."""
    auto = ltl_to_buchi(path_formula)
    entries = {s: _product_entries(graph, auto, syn_sets, s)
               for s in range(len(graph))}
    # reachable product graph
    succ = {}
    work = [n for nodes in entries.values() for n in nodes]
    while work:
        node = work.pop()
        if node in succ:
            continue
        succ[node] = _product_successors(graph, auto, syn_sets, node)
        for _, nxt in succ[node]:
            if nxt not in succ:
                work.append(nxt)
    fair = _fair_nodes(succ, auto)
    # backward closure
    rev = {n: [] for n in succ}
    for n, edges in succ.items():
        for _, m in edges:
            rev[m].append(n)
    can = set(fair)
    stack = list(fair)
    while stack:
        cur = stack.pop()
        for p in rev[cur]:
            if p not in can:
                can.add(p)
                stack.append(p)
    return {s for s, nodes in entries.items() if any(n in can for n in nodes)}


def _fair_nodes(succ, auto):
    """Nodes of accepting cycles: SCCs with an accepting state and an edge."""
    index, low, on_stack = {}, {}, set()
    stack, result = [], set()
    counter = [0]
    for start in list(succ):
        if start in index:
            continue
        work = [(start, iter([m for _, m in succ[start]]))]
        index[start] = low[start] = counter[0]
        counter[0] += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            node, it = work[-1]
            advanced = False
            for child in it:
                if child not in index:
                    index[child] = low[child] = counter[0]
                    counter[0] += 1
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter([m for _, m in succ[child]])))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                scc = []
                while True:
                    member = stack.pop()
                    on_stack.remove(member)
                    scc.append(member)
                    if member == node:
                        break
                has_cycle = len(scc) > 1 or any(
                    m == node for _, m in succ[node])
                if has_cycle and any(m[1] in auto.accepting for m in scc):
                    result.update(scc)
    return result
