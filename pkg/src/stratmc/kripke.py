"""Materialized state graphs for model checking.

Three constructions: the plain rewrite graph of a term, the graph of
the strategy small-step semantics, and its branching-time adaptation
that removes failed states (purge) and groups successors sharing a
subject term (merge, per state or per state and action).
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import EmptyBehavior, StateBudgetExceeded
from .semantics import (
    Module, cterm, initial_state, opsem_successors, DEFAULT_STATE_BUDGET,
)
from .terms import Signature, Term, eval_prop, normalize, pretty, rule_applications, term_key

STUTTER = "%stutter%"

DEFAULT_GRAPH_BUDGET = 1000000


@dataclass(frozen=True)
class BuildOptions:
    purge_fails: bool = False
    merge_states: str = "no"          # no | state | edge

    def __post_init__(self):
        if self.merge_states not in ("no", "state", "edge"):
            raise ValueError(f"bad merge_states {self.merge_states!r}")


@dataclass
class _StateRec:
    term: Term                 # subject term (labels are evaluated on it)
    members: tuple | None      # execution states, or None for term states
    terminal: bool             # stutter twin
    valid: bool = True


class KripkeGraph:
    """Indexed state graph with labeled transitions and lazy labeling.

    The transition relation lists (action, target) pairs per state in
    a deterministic construction order.  Proposition values are
    evaluated on demand and cached; a completed graph is safe for
    concurrent read-only checking.
    """

    def __init__(self, sig: Signature):
        self.sig = sig
        self._states = []
        self._succ = []
        self._index = {}
        self.initial = 0
        self._label_cache = {}
        self._label_lock = threading.Lock()

    # -- construction ------------------------------------------------

    def _add_state(self, key, term, members, terminal, budget):
        idx = self._index.get(key)
        if idx is not None:
            return idx, False
        idx = len(self._states)
        if idx >= budget:
            raise StateBudgetExceeded(f"state budget of {budget} states exhausted")
        self._index[key] = idx
        self._states.append(_StateRec(term, members, terminal))
        self._succ.append([])
        return idx, True

    def _add_edge(self, src, action, dst):
        if (action, dst) not in self._succ[src]:
            self._succ[src].append((action, dst))

    # -- queries -----------------------------------------------------

    def __len__(self):
        return len(self._states)

    def successors(self, idx):
        return self._succ[idx]

    def term(self, idx) -> Term:
        return self._states[idx].term

    def members(self, idx):
        return self._states[idx].members

    def is_terminal(self, idx) -> bool:
        return self._states[idx].terminal

    def valid(self, idx) -> bool:
        """False on failed states of an unpurged controlled graph."""
        return self._states[idx].valid

    def eval_prop(self, idx, prop: Term) -> bool:
        key = (idx, prop)
        with self._label_lock:
            hit = self._label_cache.get(key)
        if hit is not None:
            return hit
        value = eval_prop(self._states[idx].term, prop, self.sig)
        with self._label_lock:
            self._label_cache[key] = value
        return value

    def label_vector(self, idx, props):
        return tuple(self.eval_prop(idx, p) for p in props)

    def actions(self):
        out = set()
        for edges in self._succ:
            for a, _ in edges:
                out.add(a)
        return out


# ---------------------------------------------------------------------------
# Uncontrolled rewrite graph
# ---------------------------------------------------------------------------

def build_uncontrolled(sig: Signature, term: Term,
                       state_budget: int = DEFAULT_GRAPH_BUDGET) -> KripkeGraph:
    """BFS closure of one-step rule rewrites; deadlocks get a stutter loop."""
    g = KripkeGraph(sig)
    start = normalize(term, sig)
    root, _ = g._add_state(start, start, None, False, state_budget)
    queue = [root]
    seen = 0
    while seen < len(queue):
        idx = queue[seen]
        seen += 1
        succs = rule_applications(g.term(idx), sig)
        if not succs:
            g._add_edge(idx, STUTTER, idx)
            continue
        for label, result in succs:
            nxt, fresh = g._add_state(result, result, None, False, state_budget)
            g._add_edge(idx, label, nxt)
            if fresh:
                queue.append(nxt)
    return g


# ---------------------------------------------------------------------------
# Strategy-controlled graphs
# ---------------------------------------------------------------------------

def _exec_key(q):
    return repr(q)


def explore_executions(module: Module, term: Term, strategy,
                       state_budget: int = DEFAULT_GRAPH_BUDGET,
                       opsem_budget: int = DEFAULT_STATE_BUDGET):
    """Closure of the rewrite-after-control relation from t under the
    strategy.  Returns (root, successor map, can-stop map)."""
    sig = module.signature
    root = initial_state(normalize(term, sig), strategy)
    succ, stops = {}, {}
    queue = [root]
    while queue:
        q = queue.pop(0)
        if q in succ:
            continue
        if len(succ) >= state_budget:
            raise StateBudgetExceeded(f"state budget of {state_budget} states exhausted")
        out, can_stop = opsem_successors(q, module, opsem_budget)
        succ[q] = out
        stops[q] = can_stop
        for _, nxt in out:
            if nxt not in succ:
                queue.append(nxt)
    return root, succ, stops


def compute_valid(succ, stops):
    """States from which a solution or an infinite execution is reachable."""
    # reverse edges
    rev = {q: [] for q in succ}
    for q, edges in succ.items():
        for _, nxt in edges:
            rev[nxt].append(q)
    valid = set()
    frontier = [q for q, s in stops.items() if s]
    # states on a cycle also seed the backward closure
    frontier.extend(_cycle_states(succ))
    for q in frontier:
        if q in valid:
            continue
        stack = [q]
        valid.add(q)
        while stack:
            cur = stack.pop()
            for p in rev[cur]:
                if p not in valid:
                    valid.add(p)
                    stack.append(p)
    return valid


def _cycle_states(succ):
    """States lying on some cycle of the relation (Tarjan, iterative)."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    result = []
    counter = [0]

    for start in succ:
        if start in index:
            continue
        work = [(start, iter([n for _, n in succ[start]]))]
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
                    work.append((child, iter([n for _, n in succ[child]])))
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
                    if member is node or member == node:
                        break
                if len(scc) > 1:
                    result.extend(scc)
                else:
                    only = scc[0]
                    if any(nxt == only for _, nxt in succ[only]):
                        result.append(only)
    return result


def build_controlled(module: Module, term: Term, strategy,
                     options: BuildOptions = BuildOptions(),
                     state_budget: int = DEFAULT_GRAPH_BUDGET,
                     opsem_budget: int = DEFAULT_STATE_BUDGET) -> KripkeGraph:
    """Materialize the strategy graph, with the requested adaptations.

    A state whose execution states can stop (reach a solution by
    control steps) gains a stutter edge to a terminal twin, collapsed
    to a plain self-loop when the state has no other successor.  With
    purge enabled, states from which neither a solution nor an
    infinite execution is reachable are removed; with merge enabled,
    successors are grouped by subject term (and by action for the
    edge-grouping variant).
    """
    sig = module.signature
    root, succ, stops = explore_executions(module, term, strategy,
                                           state_budget, opsem_budget)
    valid = compute_valid(succ, stops)
    purge = options.purge_fails

    if purge and root not in valid:
        raise EmptyBehavior("the strategy allows no execution from the initial term")

    g = KripkeGraph(sig)
    if options.merge_states == "no":
        def node_key(q):
            return ("exec", _exec_key(q))

        start, _ = g._add_state(node_key(root), cterm(root, sig), (root,), False,
                                state_budget)
        queue = [(root, start)]
        seen = {root: start}
        while queue:
            q, idx = queue.pop(0)
            for action, nxt in succ[q]:
                if purge and nxt not in valid:
                    continue
                known = seen.get(nxt)
                if known is None:
                    known, _ = g._add_state(node_key(nxt), cterm(nxt, sig), (nxt,),
                                            False, state_budget)
                    seen[nxt] = known
                    queue.append((nxt, known))
                g._add_edge(idx, action, known)
            if stops[q]:
                _attach_stop(g, idx, state_budget)
            g._states[idx].valid = q in valid
    else:
        by_action = options.merge_states == "edge"

        def group_key(members):
            return ("group", tuple(sorted(_exec_key(m) for m in members)))

        def canonical(members):
            uniq = sorted(set(members), key=_exec_key)
            return tuple(uniq)

        root_members = canonical([root])
        start, _ = g._add_state(group_key(root_members), cterm(root, sig),
                                root_members, False, state_budget)
        queue = [(root_members, start)]
        expanded = {root_members: start}
        while queue:
            members, idx = queue.pop(0)
            buckets = {}
            order = []
            for q in members:
                for action, nxt in succ[q]:
                    key = (action, cterm(nxt, sig)) if by_action else cterm(nxt, sig)
                    if key not in buckets:
                        buckets[key] = []
                        order.append(key)
                    buckets[key].append((action, nxt))
            for key in order:
                entries = buckets[key]
                new_members = canonical([nxt for _, nxt in entries])
                if purge and not any(m in valid for m in new_members):
                    continue
                gkey = group_key(new_members)
                known = expanded.get(new_members)
                if known is None:
                    known, _ = g._add_state(gkey, cterm(new_members[0], sig),
                                            new_members, False, state_budget)
                    expanded[new_members] = known
                    queue.append((new_members, known))
                for action in _dedup(a for a, _ in entries):
                    g._add_edge(idx, action, known)
            if any(stops[q] for q in members):
                _attach_stop(g, idx, state_budget)
            g._states[idx].valid = any(m in valid for m in members)
    return g


def _dedup(items):
    seen = set()
    for x in items:
        if x not in seen:
            seen.add(x)
            yield x


def _attach_stop(g: KripkeGraph, idx, budget):
    """Stutter edge to a terminal twin, or a self-loop on a dead end."""
    if not g._succ[idx]:
        g._add_edge(idx, STUTTER, idx)
        return
    rec = g._states[idx]
    twin, fresh = g._add_state(("twin", idx), rec.term, rec.members, True, budget)
    g._add_edge(idx, STUTTER, twin)
    if fresh:
        g._add_edge(twin, STUTTER, twin)


# ---------------------------------------------------------------------------
# Bisimilarity
# ---------------------------------------------------------------------------

def bisimilar(g1: KripkeGraph, g2: KripkeGraph, props, use_actions=False) -> bool:
    """Initial states bisimilar w.r.t. the propositions (and actions if
    requested), decided by partition refinement on the disjoint union."""
    props = sorted(props, key=term_key)
    states = [(g1, i) for i in range(len(g1))] + [(g2, i) for i in range(len(g2))]
    block = {}
    by_label = {}
    for s in states:
        g, i = s
        lab = g.label_vector(i, props)
        by_label.setdefault(lab, []).append(s)
    for n, (lab, group) in enumerate(sorted(by_label.items())):
        for s in group:
            block[s] = n
    while True:
        signatures = {}
        for s in states:
            g, i = s
            sig_set = frozenset(
                (a if use_actions else None, block[(g, j)]) for a, j in g.successors(i))
            signatures[s] = (block[s], sig_set)
        mapping = {}
        for s in states:
            mapping.setdefault(signatures[s], len(mapping))
        new_block = {s: mapping[signatures[s]] for s in states}
        if len(set(new_block.values())) == len(set(block.values())):
            block = new_block
            break
        block = new_block
    return block[(g1, g1.initial)] == block[(g2, g2.initial)]


# ---------------------------------------------------------------------------
# Bounded unwinding
# ---------------------------------------------------------------------------

@dataclass
class UnwindingNode:
    state: int
    term: Term
    children: list          # (action, UnwindingNode)


def bounded_unwinding(graph: KripkeGraph, depth: int) -> UnwindingNode:
    """Depth-bounded prefix tree of the executions from the initial state."""
    if depth > 12:
        raise ValueError("unwinding depth is capped at 12")

    def expand(idx, k):
        node = UnwindingNode(idx, graph.term(idx), [])
        if k > 0:
            for action, nxt in graph.successors(idx):
                node.children.append((action, expand(nxt, k - 1)))
        return node

    return expand(graph.initial, depth)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def _dot_quote(text):
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: KripkeGraph, props=()) -> str:
    """Render the graph as a DOT digraph; satisfied propositions are
    appended to the node text, failed states are highlighted, and
    terminal twins are dashed."""
    props = sorted(props, key=term_key)
    lines = ["digraph {", "  node [shape=box];"]
    for i in range(len(graph)):
        text = pretty(graph.term(i))
        sat = [pretty(p) for p in props if graph.eval_prop(i, p)]
        if sat:
            text += "\\n" + " ".join(sat)
        attrs = [f"label={_dot_quote(text)}"]
        if graph.is_terminal(i):
            attrs.append("style=dashed")
        elif not graph.valid(i):
            attrs.append('style=filled')
            attrs.append('fillcolor=lightblue')
        if i == graph.initial:
            attrs.append("penwidth=2")
        lines.append(f"  n{i} [{', '.join(attrs)}];")
    for i in range(len(graph)):
        for action, j in graph.successors(i):
            style = ", style=dashed" if action == STUTTER else ""
            lines.append(f"  n{i} -> n{j} [label={_dot_quote(action)}{style}];")
    lines.append("}")
    return "\n".join(lines)
