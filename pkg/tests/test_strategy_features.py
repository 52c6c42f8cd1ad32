"""Strategy-language features beyond what the two example systems use:
subterm rewriting, conditional definitions, call arguments, top
restriction, iteration combinators, and the exploration budgets."""
import pytest

from stratmc import semantics as S
from stratmc.errors import NonTermination, StateBudgetExceeded
from stratmc.kripke import build_controlled, BuildOptions
from stratmc.parsing import parse_spec, parse_strategy, parse_term, resolve_module
from stratmc.semantics import (
    SFrame, SimpleState, initial_state, srewrite, step_successors,
)
from stratmc.terms import normalize

COUNTERS = """
mod COUNTERS is
  sorts Nat Pair .
  op z : -> Nat [ctor] .
  op s : Nat -> Nat [ctor] .
  op pair : Nat Nat -> Pair [ctor] .

  var N : Nat .

  rl [inc] : s(N) => s(s(N)) .
endm

smod COUNTERS-STRAT is
  protecting COUNTERS .

  vars N M : Nat .

  strat bump @ Pair .
  sd bump := matchrew pair(N, M) by N using inc .

  strat both @ Pair .
  sd both := matchrew pair(N, M) by N using inc, M using inc ; inc .

  strat equalize @ Pair .
  sd equalize := matchrew pair(N, M) by N using (match M ? idle : inc) .

  strat stepFrom : Nat @ Pair .
  csd stepFrom(s(N)) := bump if N := z .
endsm
"""


@pytest.fixture(scope="module")
def counters():
    return resolve_module(parse_spec(COUNTERS))


def term(module, text):
    return parse_term(text, module.signature)


def results(module, t, strat_text, **kw):
    return set(srewrite(module, term(module, t),
                        parse_strategy(strat_text, module), **kw))


class TestMatchRew:
    def test_single_subterm(self, counters):
        assert results(counters, "pair(s(z), s(z))", "bump") == {
            term(counters, "pair(s(s(z)), s(z))")}

    def test_parallel_subterms(self, counters):
        assert results(counters, "pair(s(z), s(z))", "both") == {
            term(counters, "pair(s(s(z)), s(s(s(z))))")}

    def test_member_failure_kills_the_state(self, counters):
        # the second member cannot be rewritten: no results at all
        assert results(counters, "pair(s(z), z)", "both") == set()

    def test_pushed_substitution_scopes_inner_tests(self, counters):
        # the test in the first member refers to the other component
        assert results(counters, "pair(s(z), s(z))", "equalize") == {
            term(counters, "pair(s(z), s(z))")}
        assert results(counters, "pair(s(z), z)", "equalize") == {
            term(counters, "pair(s(s(z)), z)")}

    def test_anywhere_variant(self, counters):
        got = results(counters, "pair(s(z), z)",
                      "amatchrew s(N) by N using inc")
        assert got == {term(counters, "pair(s(s(z)), z)")}


class TestCalls:
    def test_conditional_definition_filters(self, counters):
        assert results(counters, "pair(s(z), z)", "stepFrom(s(z))") == {
            term(counters, "pair(s(s(z)), z)")}
        # the csd condition rejects this argument: the call fails
        assert results(counters, "pair(s(z), z)", "stepFrom(s(s(z)))") == set()

    def test_rule_initial_substitution(self, counters):
        # restrict inc to redexes equal to s(z)
        got = results(counters, "pair(s(z), s(s(z)))", "amatchrew P:Pair by "
                      "P:Pair using inc[N <- z]")
        assert got == {term(counters, "pair(s(s(z)), s(s(z)))")}


class TestTopRestriction:
    def test_top_blocks_inner_redexes(self, counters):
        assert results(counters, "pair(s(z), z)", "top(inc)") == set()
        assert results(counters, "s(z)", "top(inc)") == {
            term(counters, "s(s(z))")}


class TestIteration:
    def test_star_на_vending(self, vending):
        got = results(vending, "e e [empty]", "put1 *")
        assert got == {term(vending, "e e [empty]"), term(vending, "e [e]"),
                       term(vending, "empty [e e]")}

    def test_bang_reaches_normal_forms(self, vending):
        assert results(vending, "e e [empty]", "put1 !") == {
            term(vending, "empty [e e]")}

    def test_plus_requires_one_step(self, vending):
        assert results(vending, "e e [empty]", "put1 +") == {
            term(vending, "e [e]"), term(vending, "empty [e e]")}

    def test_idle_star_is_pruned(self, river):
        # the control cycle of idle* must not hang the closure
        assert results(river, "initial", "idle *") == {
            normalize(term(river, "initial"), river.signature)}

    def test_test_combinator_keeps_term(self, vending):
        assert results(vending, "e e [empty]", "test(put1)") == {
            term(vending, "e e [empty]")}
        assert results(vending, "empty [e e]", "test(put1)") == set()


class TestBudgets:
    def test_unbounded_iteration_exhausts_graph_budget(self, counters):
        with pytest.raises((StateBudgetExceeded, NonTermination)):
            build_controlled(counters, term(counters, "pair(s(z), z)"),
                             parse_strategy("bump *", counters),
                             BuildOptions(), state_budget=50)

    def test_condition_subderivation_budget(self, counters):
        strat = parse_strategy("not(bump *)", counters)
        q = initial_state(term(counters, "pair(s(z), z)"), strat)
        with pytest.raises(NonTermination):
            # the sub-derivation for the conditional never terminates
            step_successors(q, counters, states_budget=40)

    def test_srewrite_budget(self, counters):
        with pytest.raises(NonTermination):
            srewrite(counters, term(counters, "pair(s(z), z)"),
                     parse_strategy("bump ; bump ; bump *", counters),
                     states_budget=30)
