"""Terms modulo axioms: canonicalization, matching, rewriting, labeling."""
import random

import pytest

from oracles import brute_force_matches
from stratmc.errors import IllFormed, NonTermination
from stratmc.parsing import parse_term
from stratmc.terms import (
    Budget, Equation, MatchFrag, BoolFrag, OpDecl, Signature, apply_subst,
    builtin_prelude, compose_subst, eval_condition, eval_prop, make_term,
    make_var, match, normalize, pretty, rule_applications, true_term,
    false_term,
)


def t(module, text):
    return parse_term(text, module.signature)


# ---------------------------------------------------------------------------
# Canonical forms
# ---------------------------------------------------------------------------

class TestCanonical:
    def test_flattening_and_sorting(self, river):
        sig = river.signature
        a = t(river, "left shepherd wolf")
        b = t(river, "wolf (shepherd left)")
        assert a == b
        assert a.symbol == "__" and len(a.args) == 3

    def test_identity_absorbed(self, vending):
        sig = vending.signature
        assert t(vending, "e empty") == t(vending, "e")
        assert t(vending, "empty empty") == t(vending, "empty")

    def test_comm_binary_sorted(self, river):
        assert t(river, "left | right") == t(river, "right | left")

    def test_idempotence_random(self, river):
        sig = river.signature
        rng = random.Random(7)
        for _ in range(100):
            term = _random_group(sig, rng)
            rebuilt = make_term(sig, term.symbol, term.args) if term.args else term
            assert rebuilt == term

    def test_ill_sorted_rejected(self, river):
        sig = river.signature
        river_term = t(river, "left | right")
        with pytest.raises(IllFormed):
            make_term(sig, "__", (river_term, river_term))


def _random_group(sig, rng):
    beings = ["shepherd", "wolf", "goat", "cabbage", "left", "right"]
    picks = rng.sample(beings, rng.randint(1, 5))
    terms = [make_term(sig, b, ()) for b in picks]
    if len(terms) == 1:
        return terms[0]
    return make_term(sig, "__", terms)


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------

class TestMatch:
    def test_variable_matches_its_sort(self, river):
        sig = river.signature
        pattern = make_var("X", "Group")
        subject = t(river, "left wolf")
        found = list(match(pattern, subject, sig))
        assert found == [{"X": subject}]

    def test_initial_side_split(self, river):
        sig = river.signature
        pattern = parse_term("shepherd L | R", sig, {"L": "Group", "R": "Group"})
        subject = t(river, "left shepherd wolf goat cabbage | right")
        found = list(match(pattern, subject, sig))
        assert len(found) == 1
        assert found[0]["L"] == t(river, "left wolf goat cabbage")
        assert found[0]["R"] == t(river, "right")

    def test_vending_identity_split(self, vending):
        sig = vending.signature
        pattern = parse_term("O e [I]", sig)
        subject = t(vending, "e e [empty]")
        found = list(match(pattern, subject, sig))
        assert len(found) == 1
        assert found[0]["O"] == t(vending, "e")
        assert found[0]["I"] == t(vending, "empty")

    def test_no_match_is_empty(self, river):
        sig = river.signature
        pattern = parse_term("shepherd wolf L | R", sig, {"L": "Group", "R": "Group"})
        subject = t(river, "left shepherd | right wolf")
        assert list(match(pattern, subject, sig)) == []

    def test_soundness_random(self, river):
        sig = river.signature
        rng = random.Random(13)
        pattern = parse_term("shepherd L | R", sig, {"L": "Group", "R": "Group"})
        for _ in range(50):
            lhs = _random_group(sig, rng)
            subject = make_term(sig, "_|_", (lhs, _random_group(sig, rng)))
            for subst in match(pattern, subject, sig):
                assert apply_subst(subst, pattern, sig) == subject

    def test_completeness_against_brute_force(self, river, vending):
        rng = random.Random(21)
        cases = []
        for _ in range(60):
            sig = river.signature
            subject = make_term(sig, "_|_",
                                (_random_group(sig, rng), _random_group(sig, rng)))
            rule_vars = {"L": "Group", "R": "Group"}
            pattern = rng.choice([
                parse_term("shepherd L | R", sig, rule_vars),
                parse_term("wolf goat L | R shepherd", sig, rule_vars),
                parse_term("G1 | G2", sig),
                parse_term("shepherd G1 | G2 wolf goat", sig),
            ])
            cases.append((sig, pattern, subject))
        for _ in range(40):
            sig = vending.signature
            soup = _random_soup(sig, rng)
            subject = make_term(sig, "_[_]", (soup, _random_soup(sig, rng)))
            pattern = rng.choice([
                parse_term("O e [I]", sig),
                parse_term("O [I e]", sig),
                parse_term("O [I e e]", sig),
                parse_term("O c [I]", sig),
            ])
            cases.append((sig, pattern, subject))
        for sig, pattern, subject in cases:
            got = {tuple(sorted(s.items())) for s in match(pattern, subject, sig)}
            expected = {tuple(sorted(s.items()))
                        for s in brute_force_matches(pattern, subject, sig)}
            assert got == expected

    def test_deterministic_enumeration(self, river):
        sig = river.signature
        pattern = parse_term("G1 | G2", sig)
        subject = t(river, "left shepherd wolf goat cabbage | right")
        first = [tuple(sorted(s.items())) for s in match(pattern, subject, sig)]
        second = [tuple(sorted(s.items())) for s in match(pattern, subject, sig)]
        assert first == second


def _random_soup(sig, rng):
    things = [make_term(sig, c, ()) for c in
              rng.choices(["e", "a", "c"], k=rng.randint(0, 4))]
    if not things:
        return make_term(sig, "empty", ())
    if len(things) == 1:
        return things[0]
    return make_term(sig, "__", things)


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------

class TestSubstitution:
    def test_identity_substitution(self, river):
        term = t(river, "left shepherd | right")
        assert apply_subst({}, term, river.signature) == term

    def test_recanonicalizes(self, river):
        sig = river.signature
        pattern = parse_term("L | R shepherd", sig, {"L": "Group", "R": "Group"})
        got = apply_subst({"L": t(river, "wolf"), "R": t(river, "right")}, pattern, sig)
        assert got == t(river, "wolf | right shepherd")

    def test_composition(self, river):
        sig = river.signature
        rng = random.Random(3)
        x, y = make_var("X", "Group"), make_var("Y", "Group")
        pattern = make_term(sig, "_|_", (x, y))
        for _ in range(40):
            s1 = {"X": make_term(sig, "__", (make_var("Y", "Group"),
                                             _random_group(sig, rng)))}
            s2 = {"Y": _random_group(sig, rng)}
            a = apply_subst(s2, apply_subst(s1, pattern, sig), sig)
            b = apply_subst(compose_subst(s2, s1, sig), pattern, sig)
            assert a == b


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

class TestNormalize:
    def test_no_equation_applies(self, river):
        term = t(river, "left wolf | right")
        assert normalize(term, river.signature) == term

    def test_risky_owise(self, river):
        sig = river.signature
        term = parse_term("risky(left shepherd wolf goat cabbage | right)", sig)
        assert normalize(term, sig) == false_term(sig)

    def test_initial_unfolds(self, river):
        sig = river.signature
        assert normalize(t(river, "initial"), sig) == \
            t(river, "left shepherd wolf goat cabbage | right")

    def test_deterministic(self, river):
        sig = river.signature
        term = parse_term("risky(initial)", sig)
        assert normalize(term, sig) == normalize(term, sig)

    def test_non_ground_rejected(self, river):
        with pytest.raises(IllFormed):
            normalize(make_var("X", "Group"), river.signature)

    def test_nontermination_budget(self):
        sig = Signature()
        builtin_prelude(sig)
        sig.add_sort("S")
        sig.add_op(OpDecl("a", (), "S"))
        sig.add_op(OpDecl("f", ("S",), "S"))
        sig.close_subsorts()
        a = make_term(sig, "a", ())
        f_a = make_term(sig, "f", (a,))
        # f(X) = f(f(X)) grows forever
        x = make_var("X", "S")
        sig.add_equation(Equation(make_term(sig, "f", (x,)),
                                  make_term(sig, "f", (make_term(sig, "f", (x,)),)),
                                  (), False))
        with pytest.raises(NonTermination):
            normalize(f_a, sig, Budget(500))


# ---------------------------------------------------------------------------
# Condition evaluation
# ---------------------------------------------------------------------------

class TestConditions:
    def test_empty_condition(self, river):
        sig = river.signature
        base = {"R": t(river, "left | right")}
        assert list(eval_condition((), base, sig)) == [base]

    def test_boolean_fragment_false(self, river):
        sig = river.signature
        frag = BoolFrag(parse_term("risky(R)", sig))
        base = {"R": normalize(t(river, "initial"), sig)}
        assert list(eval_condition((frag,), base, sig)) == []

    def test_match_fragment_binds(self, river):
        sig = river.signature
        frag = MatchFrag(parse_term("G goat", sig), parse_term("left wolf goat", sig))
        found = list(eval_condition((frag,), {}, sig))
        assert len(found) == 1
        assert found[0]["G"] == t(river, "left wolf")


# ---------------------------------------------------------------------------
# Rule application
# ---------------------------------------------------------------------------

class TestRuleApplications:
    def test_goat_filter(self, river):
        sig = river.signature
        init = normalize(t(river, "initial"), sig)
        got = rule_applications(init, sig, label="goat")
        assert got == [("goat", t(river, "left wolf cabbage | right shepherd goat"))]

    def test_all_rules_at_initial(self, river):
        sig = river.signature
        init = normalize(t(river, "initial"), sig)
        got = rule_applications(init, sig)
        assert [label for label, _ in got] == ["alone", "wolf", "goat", "cabbage"]

    def test_constant_without_rules(self, river):
        sig = river.signature
        assert rule_applications(t(river, "goal"), sig) == []

    def test_results_are_normal_forms(self, vending):
        sig = vending.signature
        start = normalize(t(vending, "e e [empty]"), sig)
        for _, result in rule_applications(start, sig):
            assert normalize(result, sig) == result

    def test_init_substitution_restricts(self, river):
        sig = river.signature
        init = normalize(t(river, "initial"), sig)
        bound = {"L": t(river, "left wolf goat cabbage")}
        got = rule_applications(init, sig, label="alone", init=bound)
        assert got == [("alone", t(river, "left wolf goat cabbage | right shepherd"))]


# ---------------------------------------------------------------------------
# Atomic propositions
# ---------------------------------------------------------------------------

class TestEvalProp:
    def test_goal_state(self, river):
        sig = river.signature
        state = t(river, "left | right shepherd wolf goat cabbage")
        assert eval_prop(state, t(river, "goal"), sig)

    def test_initial_not_death(self, river):
        sig = river.signature
        init = normalize(t(river, "initial"), sig)
        assert not eval_prop(init, t(river, "death"), sig)

    def test_initial_not_goal(self, river):
        sig = river.signature
        init = normalize(t(river, "initial"), sig)
        assert not eval_prop(init, t(river, "goal"), sig)

    def test_death_after_eating(self, river):
        sig = river.signature
        state = t(river, "left goat | right shepherd wolf")
        assert eval_prop(state, t(river, "death"), sig)
