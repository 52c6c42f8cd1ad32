"""Graph materialization, adaptations, bisimilarity, unwinding, DOT."""
from collections import Counter

import pytest

from oracles import naive_bisimilar, parse_dot
from stratmc.errors import EmptyBehavior
from stratmc.kripke import (
    STUTTER, BuildOptions, bisimilar, bounded_unwinding, build_controlled,
    build_uncontrolled, compute_valid, explore_executions, to_dot,
)
from stratmc.parsing import parse_strategy, parse_term
from stratmc.semantics import cterm, opsem_successors
from stratmc.terms import eval_prop, normalize

MERGE_STATE = BuildOptions(purge_fails=True, merge_states="state")
MERGE_EDGE = BuildOptions(purge_fails=True, merge_states="edge")
PURGE_ONLY = BuildOptions(purge_fails=True, merge_states="no")
RAW = BuildOptions()


def term(module, text):
    return parse_term(text, module.signature)


def controlled(module, term_text, strat_text, options=RAW):
    return build_controlled(module, term(module, term_text),
                            parse_strategy(strat_text, module), options)


# ---------------------------------------------------------------------------
# Uncontrolled graphs
# ---------------------------------------------------------------------------

class TestUncontrolled:
    def test_river_state_count(self, river):
        g = build_uncontrolled(river.signature, term(river, "initial"))
        assert len(g) == 36

    def test_constant_without_rules(self, river):
        g = build_uncontrolled(river.signature, term(river, "goal"))
        assert len(g) == 1
        assert g.successors(0) == [(STUTTER, 0)]

    def test_vending_reaches_cake(self, vending):
        g = build_uncontrolled(vending.signature, term(vending, "e e [empty]"))
        has_cake = term(vending, "hasCake")
        assert any(g.eval_prop(i, has_cake) for i in range(len(g)))

    def test_totality(self, river, vending):
        for g in (build_uncontrolled(river.signature, term(river, "initial")),
                  build_uncontrolled(vending.signature, term(vending, "e e [empty]"))):
            for i in range(len(g)):
                assert g.successors(i)


# ---------------------------------------------------------------------------
# Controlled graphs
# ---------------------------------------------------------------------------

class TestControlled:
    def test_safe_merged_purged(self, river):
        g = controlled(river, "initial", "safe", MERGE_STATE)
        assert len(g) == 11
        counts = Counter(g.term(i) for i in range(len(g)))
        expected = Counter()
        for text, n in [
            ("left shepherd wolf goat cabbage | right", 2),
            ("left wolf cabbage | right shepherd goat", 1),
            ("left shepherd wolf cabbage | right goat", 1),
            ("left cabbage | right shepherd wolf goat", 1),
            ("left shepherd goat cabbage | right wolf", 1),
            ("left goat | right shepherd wolf cabbage", 1),
            ("left shepherd goat | right wolf cabbage", 1),
            ("left shepherd wolf goat | right cabbage", 1),
            ("left | right shepherd wolf goat cabbage", 1),
            ("left wolf | right shepherd goat cabbage", 1),
        ]:
            expected[term(river, text)] += n
        assert counts == expected

    def test_safe_raw_contains_failed_states(self, river):
        g = controlled(river, "initial", "safe", RAW)
        assert len(g) == 22
        assert sum(1 for i in range(len(g)) if not g.valid(i)) == 11

    def test_eager_eating_all_valid(self, river):
        raw = controlled(river, "initial", "eagerEating", RAW)
        assert all(raw.valid(i) for i in range(len(raw)))
        merged = controlled(river, "initial", "eagerEating", MERGE_STATE)
        assert len(merged) == 43

    def test_vending_merge_collapses_branching(self, vending):
        alpha = "put1 ; apple | put1 ; put1 ; cake"
        unmerged = controlled(vending, "e e [empty]", alpha,
                              BuildOptions(True, "no"))
        merged = controlled(vending, "e e [empty]", alpha, MERGE_STATE)
        assert len(unmerged.successors(unmerged.initial)) == 2
        assert len(merged.successors(merged.initial)) == 1
        assert len(unmerged) == 6 and len(merged) == 5

    def test_empty_behavior(self, river):
        with pytest.raises(EmptyBehavior):
            controlled(river, "initial", "fail", PURGE_ONLY)

    def test_purged_graphs_are_total(self, river, vending):
        graphs = [
            controlled(river, "initial", "safe", PURGE_ONLY),
            controlled(river, "initial", "safe", MERGE_STATE),
            controlled(river, "initial", "eagerEating", MERGE_EDGE),
            controlled(vending, "e e [empty]", "put1 ; (apple | put1 ; cake)",
                       MERGE_STATE),
        ]
        for g in graphs:
            for i in range(len(g)):
                assert g.successors(i)

    def test_solution_gets_self_loop(self, river):
        g = controlled(river, "initial", "idle", PURGE_ONLY)
        assert len(g) == 1
        assert g.successors(0) == [(STUTTER, 0)]

    def test_edge_merge_partition_law(self, river, vending):
        cases = [
            (river, "initial", "safe"),
            (vending, "e e [empty]", "put1 ; apple | put1 ; put1 ; cake"),
        ]
        for module, t0, strat in cases:
            g = build_controlled(module, term(module, t0),
                                 parse_strategy(strat, module),
                                 BuildOptions(False, "edge"))
            sig = module.signature
            for i in range(len(g)):
                if g.is_terminal(i):
                    continue
                # expected partition of member successors by (action, cterm)
                blocks = {}
                for q in g.members(i):
                    for action, nxt in opsem_successors(q, module)[0]:
                        key = (action, cterm(nxt, sig))
                        blocks.setdefault(key, set()).add(nxt)
                got = {}
                for action, j in g.successors(i):
                    if action == STUTTER:
                        continue
                    got[(action, g.term(j))] = set(g.members(j))
                assert got == blocks


# ---------------------------------------------------------------------------
# Validity and purge soundness
# ---------------------------------------------------------------------------

class TestValidity:
    def test_purge_removes_exactly_the_hopeless_states(self, river):
        module = river
        root, succ, stops = explore_executions(
            module, term(module, "initial"), parse_strategy("safe", module))
        valid = compute_valid(succ, stops)
        # brute force: a state is hopeless iff no stop-capable state and
        # no cycle is reachable from it
        for q in succ:
            reachable = {q}
            frontier = [q]
            cycle = False
            while frontier:
                cur = frontier.pop()
                for _, nxt in succ[cur]:
                    if nxt in reachable:
                        cycle = cycle or _reaches(succ, nxt, cur)
                        continue
                    reachable.add(nxt)
                    frontier.append(nxt)
            hopeful = any(stops[r] for r in reachable) or cycle or \
                any(_on_cycle(succ, r) for r in reachable)
            assert (q in valid) == hopeful

    def test_cycle_states_are_valid(self, river):
        module = river
        root, succ, stops = explore_executions(
            module, term(module, "initial"), parse_strategy("eagerEating", module))
        valid = compute_valid(succ, stops)
        assert set(succ) == valid


def _reaches(succ, src, dst):
    seen, work = set(), [src]
    while work:
        cur = work.pop()
        if cur == dst:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        work.extend(nxt for _, nxt in succ[cur])
    return False


def _on_cycle(succ, q):
    return any(_reaches(succ, nxt, q) for _, nxt in succ[q])


# ---------------------------------------------------------------------------
# Bisimilarity
# ---------------------------------------------------------------------------

class TestBisimilar:
    def test_reflexive(self, river):
        g = controlled(river, "initial", "safe", MERGE_STATE)
        props = [term(river, "goal"), term(river, "risky")]
        assert bisimilar(g, g, props)
        assert bisimilar(g, g, props, use_actions=True)

    def test_vending_merged_graphs_bisimilar(self, vending):
        props = [term(vending, "hasCake")]
        a = controlled(vending, "e e [empty]",
                       "put1 ; apple | put1 ; put1 ; cake", MERGE_STATE)
        b = controlled(vending, "e e [empty]",
                       "put1 ; (apple | put1 ; cake)", MERGE_STATE)
        for use_actions in (False, True):
            assert bisimilar(a, b, props, use_actions)
            assert naive_bisimilar(a, b, props, use_actions)

    def test_vending_unmerged_graphs_differ(self, vending):
        props = [term(vending, "hasCake")]
        a = controlled(vending, "e e [empty]",
                       "put1 ; apple | put1 ; put1 ; cake", PURGE_ONLY)
        b = controlled(vending, "e e [empty]",
                       "put1 ; (apple | put1 ; cake)", PURGE_ONLY)
        assert not bisimilar(a, b, props)
        assert not naive_bisimilar(a, b, props)

    def test_state_merge_bisimilar_to_edge_merge(self, river, vending):
        cases = [
            (river, "initial", "safe", [term(river, "goal"), term(river, "risky")]),
            (river, "initial", "eagerEating",
             [term(river, "goal"), term(river, "death")]),
            (vending, "e e [empty]", "put1 ; apple | put1 ; put1 ; cake",
             [term(vending, "hasCake")]),
        ]
        for module, t0, strat, props in cases:
            a = controlled(module, t0, strat, MERGE_STATE)
            b = controlled(module, t0, strat, MERGE_EDGE)
            assert bisimilar(a, b, props, use_actions=False)

    def test_rewriting_preserving_identities(self, river, vending):
        pairs = [
            (river, "initial", "oneCrossing | oneCrossing", "oneCrossing"),
            (river, "initial", "idle ; safe", "safe"),
            (river, "initial", "oneCrossing ; (eating | idle)",
             "(oneCrossing ; eating) | (oneCrossing ; idle)"),
            (vending, "e e [empty]", "put1 ; (apple | put1 ; cake)",
             "(put1 ; apple) | (put1 ; put1 ; cake)"),
        ]
        for module, t0, left, right in pairs:
            props = [term(module, p) for p in
                     (("goal", "risky", "death") if module is river
                      else ("hasCake",))]
            a = controlled(module, t0, left, MERGE_STATE)
            b = controlled(module, t0, right, MERGE_STATE)
            assert bisimilar(a, b, props)

    def test_stutter_twin_labels(self, river, vending):
        g = controlled(vending, "e e [empty]", "put1 ; (idle | apple)", MERGE_STATE)
        props = [term(vending, "hasCake")]
        twins = [i for i in range(len(g)) if g.is_terminal(i)]
        assert twins
        for i in range(len(g)):
            for action, j in g.successors(i):
                if g.is_terminal(j) and j != i:
                    assert action == STUTTER
                    assert g.label_vector(i, props) == g.label_vector(j, props)


# ---------------------------------------------------------------------------
# Bounded unwinding
# ---------------------------------------------------------------------------

class TestBoundedUnwinding:
    def test_depth_zero(self, river):
        g = controlled(river, "initial", "safe", MERGE_STATE)
        tree = bounded_unwinding(g, 0)
        assert tree.children == [] and tree.state == g.initial

    def test_vending_merged_root_has_one_child(self, vending):
        g = controlled(vending, "e e [empty]",
                       "put1 ; apple | put1 ; put1 ; cake", MERGE_STATE)
        tree = bounded_unwinding(g, 1)
        assert len(tree.children) == 1

    def test_river_safe_only_goat_survives(self, river):
        g = controlled(river, "initial", "safe", MERGE_STATE)
        tree = bounded_unwinding(g, 1)
        assert [a for a, _ in tree.children] == ["goat"]
        (_, child), = tree.children
        assert child.term == term(river, "left wolf cabbage | right shepherd goat")

    def test_depth_capped(self, river):
        g = controlled(river, "initial", "safe", MERGE_STATE)
        with pytest.raises(ValueError):
            bounded_unwinding(g, 13)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

class TestToDot:
    def test_single_state_graph(self, river):
        g = build_uncontrolled(river.signature, term(river, "goal"))
        text = to_dot(g)
        nodes, edges = parse_dot(text)
        assert nodes == 1 and edges == 1

    def test_safe_raw_styles_failed_states(self, river):
        g = controlled(river, "initial", "safe", RAW)
        props = [term(river, "goal"), term(river, "risky"), term(river, "death")]
        text = to_dot(g, props)
        nodes, edges = parse_dot(text)
        assert nodes == len(g)
        failed = sum(1 for i in range(len(g)) if not g.valid(i))
        assert text.count("lightblue") == failed

    def test_prop_annotations(self, vending):
        g = build_uncontrolled(vending.signature, term(vending, "e e [empty]"))
        has_cake = term(vending, "hasCake")
        text = to_dot(g, [has_cake])
        sat = sum(1 for i in range(len(g)) if g.eval_prop(i, has_cake))
        assert text.count("hasCake") == sat
