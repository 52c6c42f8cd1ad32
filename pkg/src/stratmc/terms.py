"""Order-sorted terms modulo assoc/comm/identity axioms.

Signatures, canonical flattened terms, matching modulo the declared
axioms, substitution, equational normalization, rule application and
atomic-proposition evaluation.  Everything here is immutable after
construction and safe to share between threads for reading.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import IllFormed, NonTermination, SortCheckError

# Builtin prelude names, implicitly part of every signature.
BOOL_SORT = "Bool"
PROP_SORT = "Prop"
STATE_SORT = "State"
SATISFIES = "_|=_"

DEFAULT_NORMALIZE_BUDGET = 100000


class Budget:
    """Mutable step counter shared across one reduction."""

    def __init__(self, limit=DEFAULT_NORMALIZE_BUDGET):
        self.limit = limit
        self.used = 0

    def tick(self, what="equational reduction"):
        self.used += 1
        if self.used > self.limit:
            raise NonTermination(f"{what} exceeded {self.limit} steps")


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """A canonical term: operator application or variable.

    AC operators are stored flattened with children in a fixed total
    order; identity elements are absorbed during construction.  Build
    terms with make_term / make_var rather than directly.
    """
    symbol: str
    args: tuple
    sort: str
    is_var: bool = False

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.symbol, self.args, self.is_var)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (self is other) or (
            isinstance(other, Term)
            and self._hash == other._hash
            and self.symbol == other.symbol
            and self.is_var == other.is_var
            and self.args == other.args
        )

    def is_ground(self):
        if self.is_var:
            return False
        return all(a.is_ground() for a in self.args)

    def variables(self):
        """Set of (name, sort) pairs of the variables occurring in the term."""
        if self.is_var:
            return {(self.symbol, self.sort)}
        out = set()
        for a in self.args:
            out |= a.variables()
        return out

    def __repr__(self):
        marker = ", var" if self.is_var else ""
        return f"Term({pretty(self)!r}{marker})"


def term_key(t: Term):
    """Total order key: symbol name, then arity, then children."""
    return (t.symbol, len(t.args), t.is_var, tuple(term_key(a) for a in t.args))


def make_var(name: str, sort: str) -> Term:
    return Term(name, (), sort, True)


# ---------------------------------------------------------------------------
# Declarations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpDecl:
    name: str
    arg_sorts: tuple
    result_sort: str
    assoc: bool = False
    comm: bool = False
    identity: Term | None = None
    ctor: bool = False


@dataclass(frozen=True)
class EqualityFrag:
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class MatchFrag:
    pattern: Term
    subject: Term


@dataclass(frozen=True)
class BoolFrag:
    term: Term


# A condition is a tuple of fragments, evaluated left to right.
Condition = tuple


@dataclass(frozen=True)
class Rule:
    label: str
    lhs: Term
    rhs: Term
    condition: Condition = ()


@dataclass(frozen=True)
class Equation:
    lhs: Term
    rhs: Term
    condition: Condition = ()
    owise: bool = False


class Signature:
    """Flattened signature: sorts, operators, rules and equations.

    Instances are frozen after the resolver finishes building them;
    the only mutable member is an internal normal-form memo whose
    entries are deterministic, so sharing it between readers is safe.
    """

    def __init__(self):
        self.sorts = set()
        self._supersorts = {}      # sort -> set of strictly greater sorts
        self.ops = {}              # name -> list[OpDecl]
        self.rules = []
        self.equations = []
        self.variables = {}        # default variable table: name -> sort
        self.rule_labels = set()
        self._eqs_by_symbol = {}
        self._nf_cache = {}

    # -- construction helpers (used by the resolver) --

    def add_sort(self, sort):
        self.sorts.add(sort)
        self._supersorts.setdefault(sort, set())

    def add_subsort(self, lower, upper):
        for s in (lower, upper):
            if s not in self.sorts:
                raise SortCheckError(f"subsort declaration uses unknown sort {s!r}")
        self._supersorts.setdefault(lower, set()).add(upper)

    def close_subsorts(self):
        changed = True
        while changed:
            changed = False
            for s, ups in self._supersorts.items():
                extra = set()
                for u in ups:
                    extra |= self._supersorts.get(u, set())
                if not extra <= ups:
                    ups |= extra
                    changed = True
        for s, ups in self._supersorts.items():
            if s in ups:
                raise SortCheckError(f"subsort cycle through {s!r}")

    def add_op(self, decl: OpDecl):
        for s in decl.arg_sorts + (decl.result_sort,):
            if s not in self.sorts:
                raise SortCheckError(f"operator {decl.name!r} uses unknown sort {s!r}")
        self.ops.setdefault(decl.name, []).append(decl)

    def add_rule(self, rule: Rule):
        self.rules.append(rule)
        self.rule_labels.add(rule.label)

    def add_equation(self, eq: Equation):
        self.equations.append(eq)
        sym = eq.lhs.symbol
        self._eqs_by_symbol.setdefault(sym, ([], []))
        self._eqs_by_symbol[sym][1 if eq.owise else 0].append(eq)

    # -- queries --

    def leq(self, s1, s2):
        """Subsort order: s1 <= s2."""
        return s1 == s2 or s2 in self._supersorts.get(s1, ())

    def attrs(self, name):
        """Axiom attributes of an operator name (first declaration wins)."""
        decls = self.ops.get(name)
        return decls[0] if decls else None

    def equations_for(self, symbol):
        return self._eqs_by_symbol.get(symbol, ((), ()))

    def has_sort(self, sort):
        return sort in self.sorts


def builtin_prelude(sig: Signature):
    """Install the implicit prelude: Bool constants, Prop, State, _|=_."""
    for s in (BOOL_SORT, PROP_SORT, STATE_SORT):
        sig.add_sort(s)
    sig.add_op(OpDecl("true", (), BOOL_SORT, ctor=True))
    sig.add_op(OpDecl("false", (), BOOL_SORT, ctor=True))
    sig.add_op(OpDecl(SATISFIES, (STATE_SORT, PROP_SORT), BOOL_SORT))


# ---------------------------------------------------------------------------
# Term construction (canonicalization)
# ---------------------------------------------------------------------------

def make_term(sig: Signature, symbol: str, args) -> Term:
    """Build the canonical term for an operator application.

    Flattens assoc(-comm) children, absorbs identity elements, sorts
    AC children, and computes the least sort.  Raises IllFormed when
    no declaration of the operator accepts the argument sorts.
    """
    args = list(args)
    decl = sig.attrs(symbol)
    if decl is None:
        raise IllFormed(f"unknown operator {symbol!r}")

    if decl.assoc:
        flat = []
        for a in args:
            if not a.is_var and a.symbol == symbol:
                flat.extend(a.args)
            else:
                flat.append(a)
        args = flat
    if decl.identity is not None:
        args = [a for a in args if a != decl.identity]
        if not args:
            return decl.identity
        if len(args) == 1:
            return args[0]
    if decl.comm and decl.assoc:
        args.sort(key=term_key)
    elif decl.comm:
        if len(args) == 2:
            args.sort(key=term_key)

    sort = _least_sort(sig, symbol, args)
    return Term(symbol, tuple(args), sort)


def _least_sort(sig: Signature, symbol: str, args) -> str:
    decl0 = sig.attrs(symbol)
    candidates = []
    for decl in sig.ops[symbol]:
        if decl.assoc and len(args) >= 2:
            arg_ok = all(
                sig.leq(a.sort, decl.arg_sorts[0]) and sig.leq(a.sort, decl.arg_sorts[1])
                for a in args
            )
            nest_ok = all(sig.leq(decl.result_sort, s) for s in decl.arg_sorts)
            if arg_ok and nest_ok:
                candidates.append(decl.result_sort)
        elif len(decl.arg_sorts) == len(args):
            if all(sig.leq(a.sort, s) for a, s in zip(args, decl.arg_sorts)):
                candidates.append(decl.result_sort)
    if not candidates:
        shown = ", ".join(a.sort for a in args)
        raise IllFormed(f"no declaration of {symbol!r} accepts argument sorts ({shown})")
    least = candidates[0]
    for c in candidates[1:]:
        if sig.leq(c, least):
            least = c
        elif not sig.leq(least, c) and c < least:
            least = c  # incomparable: stable lexicographic pick
    return least


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------

def apply_subst(subst: dict, t: Term, sig: Signature) -> Term:
    """Replace assigned variables and re-canonicalize the result."""
    if t.is_var:
        return subst.get(t.symbol, t)
    if not subst or t.is_ground():
        return t
    return make_term(sig, t.symbol, [apply_subst(subst, a, sig) for a in t.args])


def compose_subst(s2: dict, s1: dict, sig: Signature) -> dict:
    """Composition: (s2 . s1)(x) = s2(s1(x)), with s2 bindings kept."""
    out = {x: apply_subst(s2, t, sig) for x, t in s1.items()}
    for x, t in s2.items():
        out.setdefault(x, t)
    return out


def _frozen(subst: dict):
    return tuple(sorted(subst.items()))


# ---------------------------------------------------------------------------
# Matching modulo axioms
# ---------------------------------------------------------------------------

def match(pattern: Term, subject: Term, sig: Signature, subst: dict | None = None):
    """Yield every substitution making the pattern equal to the subject
    modulo assoc/comm/identity, extending the given base substitution.

    Duplicates are eliminated; the enumeration order is deterministic
    for canonical inputs.
    """
    seen = set()
    for s in _match(pattern, subject, sig, dict(subst or {})):
        key = _frozen(s)
        if key not in seen:
            seen.add(key)
            yield s


def matches(pattern, subject, sig, subst=None):
    """True when at least one match exists."""
    for _ in match(pattern, subject, sig, subst):
        return True
    return False


def _match(pattern, subject, sig, subst):
    if pattern.is_var:
        bound = subst.get(pattern.symbol)
        if bound is not None:
            if bound == subject:
                yield subst
        elif sig.leq(subject.sort, pattern.sort):
            new = dict(subst)
            new[pattern.symbol] = subject
            yield new
        return

    decl = sig.attrs(pattern.symbol)
    if decl is None:
        return
    if decl.assoc and decl.comm:
        yield from _match_ac(pattern, subject, sig, subst, decl)
    elif decl.assoc:
        yield from _match_assoc(pattern, subject, sig, subst, decl)
    elif decl.comm:
        if subject.symbol == pattern.symbol and len(subject.args) == 2 == len(pattern.args):
            p1, p2 = pattern.args
            s1, s2 = subject.args
            for m1 in _match(p1, s1, sig, subst):
                yield from _match(p2, s2, sig, m1)
            for m1 in _match(p1, s2, sig, subst):
                yield from _match(p2, s1, sig, m1)
    else:
        if subject.symbol == pattern.symbol and len(subject.args) == len(pattern.args):
            states = [subst]
            for p, s in zip(pattern.args, subject.args):
                states = [m2 for m1 in states for m2 in _match(p, s, sig, m1)]
                if not states:
                    return
            yield from states


def _subject_elements(symbol, subject):
    if not subject.is_var and subject.symbol == symbol:
        return list(subject.args)
    return [subject]


def _split_pattern_items(symbol, pattern, subst, identity):
    """Instantiate bound variables and re-flatten the pattern child list.

    Returns (fixed, var_slots) where fixed are non-variable pattern
    children and var_slots the unbound variable occurrences, in order.
    """
    fixed, var_slots = [], []
    stack = list(pattern.args)[::-1]
    while stack:
        item = stack.pop()
        if item.is_var and item.symbol in subst:
            item = subst[item.symbol]
        if item.is_var:
            var_slots.append(item)
        elif item.symbol == symbol:
            stack.extend(reversed(item.args))
        elif identity is not None and item == identity:
            continue
        else:
            fixed.append(item)
    return fixed, var_slots


def _match_ac(pattern, subject, sig, subst, decl):
    """Flattened multiset matching with backtracking over variable splits."""
    elements = _subject_elements(pattern.symbol, subject)
    if not sig.leq(subject.sort, decl.result_sort) and subject.symbol != pattern.symbol:
        # A lone subject may still stand for a singleton multiset of a
        # smaller sort; anything else cannot match this operator.
        if not any(sig.leq(subject.sort, s) for s in decl.arg_sorts):
            return
    fixed, var_slots = _split_pattern_items(pattern.symbol, pattern, subst, decl.identity)

    def assign_fixed(i, remaining, sub):
        if i == len(fixed):
            yield from distribute(remaining, sub)
            return
        pat = fixed[i]
        tried = set()
        for j, el in enumerate(remaining):
            if el in tried:
                continue
            tried.add(el)
            rest = remaining[:j] + remaining[j + 1:]
            for sub2 in _match(pat, el, sig, sub):
                yield from assign_fixed(i + 1, rest, sub2)

    def distribute(remaining, sub):
        slots = []
        for v in var_slots:
            if v.symbol in sub:
                # became bound while matching fixed items: peel its value
                val = sub[v.symbol]
                need = _subject_elements(pattern.symbol, val)
                pool = list(remaining)
                for n in need:
                    if n in pool:
                        pool.remove(n)
                    else:
                        return
                remaining = pool
            else:
                slots.append(v)
        if not slots:
            if not remaining:
                yield sub
            return
        if not remaining and decl.identity is None:
            return
        for choice in itertools.product(range(len(slots)), repeat=len(remaining)):
            buckets = [[] for _ in slots]
            for el, k in zip(remaining, choice):
                buckets[k].append(el)
            sub2 = dict(sub)
            ok = True
            for v, bucket in zip(slots, buckets):
                if not bucket:
                    if decl.identity is None:
                        ok = False
                        break
                    value = decl.identity
                elif len(bucket) == 1:
                    value = bucket[0]
                else:
                    value = make_term(sig, pattern.symbol, bucket)
                if not sig.leq(value.sort, v.sort):
                    ok = False
                    break
                prev = sub2.get(v.symbol)
                if prev is None:
                    sub2[v.symbol] = value
                elif prev != value:
                    ok = False
                    break
            if ok:
                yield sub2

    yield from assign_fixed(0, elements, dict(subst))


def _match_assoc(pattern, subject, sig, subst, decl):
    """Flattened sequence matching for assoc-only operators."""
    elements = _subject_elements(pattern.symbol, subject)
    items = []
    stack = list(pattern.args)[::-1]
    while stack:
        item = stack.pop()
        if not item.is_var and item.symbol == pattern.symbol:
            stack.extend(reversed(item.args))
        else:
            items.append(item)

    def go(i, j, sub):
        if i == len(items):
            if j == len(elements):
                yield sub
            return
        item = items[i]
        if item.is_var and item.symbol not in sub:
            lo = 0 if decl.identity is not None else 1
            for take in range(lo, len(elements) - j + 1):
                seg = elements[j:j + take]
                if not seg:
                    value = decl.identity
                elif len(seg) == 1:
                    value = seg[0]
                else:
                    value = make_term(sig, pattern.symbol, seg)
                if value is None or not sig.leq(value.sort, item.sort):
                    continue
                sub2 = dict(sub)
                sub2[item.symbol] = value
                yield from go(i + 1, j + take, sub2)
        else:
            concrete = sub.get(item.symbol, item) if item.is_var else item
            need = _subject_elements(pattern.symbol, concrete) if not concrete.is_var else [concrete]
            if concrete.is_var or (concrete.symbol != pattern.symbol):
                if j < len(elements):
                    for sub2 in _match(item, elements[j], sig, sub):
                        yield from go(i + 1, j + 1, sub2)
            else:
                if elements[j:j + len(need)] == need:
                    yield from go(i + 1, j + len(need), sub)

    yield from go(0, 0, dict(subst))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def true_term(sig: Signature) -> Term:
    return make_term(sig, "true", ())


def false_term(sig: Signature) -> Term:
    return make_term(sig, "false", ())


def normalize(t: Term, sig: Signature, budget: Budget | None = None) -> Term:
    """Reduce to the unique normal form of the convergent equations.

    Leftmost-innermost; non-owise equations are tried before owise
    ones at each position, in declaration order.
    """
    if not t.is_ground():
        raise IllFormed(f"cannot normalize non-ground term {pretty(t)}")
    if budget is None:
        budget = Budget()
    try:
        return _normalize(t, sig, budget)
    except RecursionError:
        raise NonTermination(
            "equational reduction built an unboundedly deep term") from None


def _normalize(t, sig, budget):
    cached = sig._nf_cache.get(t)
    if cached is not None:
        return cached
    current = t
    if current.args:
        current = make_term(sig, current.symbol, [_normalize(a, sig, budget) for a in current.args])
    while True:
        hit = sig._nf_cache.get(current)
        if hit is not None:
            sig._nf_cache[t] = hit
            return hit
        rewritten = _reduce_at_root(current, sig, budget)
        if rewritten is None:
            sig._nf_cache[t] = current
            sig._nf_cache[current] = current
            return current
        budget.tick()
        result = _normalize(rewritten, sig, budget)
        sig._nf_cache[t] = result
        sig._nf_cache[current] = result
        return result


def _reduce_at_root(t, sig, budget):
    plain, owise = sig.equations_for(t.symbol)
    for group in (plain, owise):
        for eq in group:
            for s in match(eq.lhs, t, sig):
                for s2 in eval_condition(eq.condition, s, sig, budget):
                    return apply_subst(s2, eq.rhs, sig)
    return None


def eval_condition(cond: Condition, subst: dict, sig: Signature, budget: Budget | None = None):
    """Yield every extension of the substitution satisfying all fragments."""
    if budget is None:
        budget = Budget()

    def go(i, sub):
        if i == len(cond):
            yield sub
            return
        frag = cond[i]
        if isinstance(frag, EqualityFrag):
            lhs = _normalize(apply_subst(sub, frag.lhs, sig), sig, budget)
            rhs = _normalize(apply_subst(sub, frag.rhs, sig), sig, budget)
            if lhs == rhs:
                yield from go(i + 1, sub)
        elif isinstance(frag, BoolFrag):
            val = _normalize(apply_subst(sub, frag.term, sig), sig, budget)
            if val == true_term(sig):
                yield from go(i + 1, sub)
        elif isinstance(frag, MatchFrag):
            subject = _normalize(apply_subst(sub, frag.subject, sig), sig, budget)
            for sub2 in match(frag.pattern, subject, sig, sub):
                yield from go(i + 1, sub2)
        else:  # pragma: no cover - parser only builds the three kinds
            raise IllFormed(f"unknown condition fragment {frag!r}")

    yield from go(0, dict(subst))


# ---------------------------------------------------------------------------
# Rule application
# ---------------------------------------------------------------------------

def positions(t: Term):
    """Pre-order traversal of all subterm positions (path, subterm)."""
    yield (), t
    for i, a in enumerate(t.args):
        for path, sub in positions(a):
            yield (i,) + path, sub


def replace_at(t: Term, path, new: Term, sig: Signature) -> Term:
    if not path:
        return new
    i = path[0]
    args = list(t.args)
    args[i] = replace_at(args[i], path[1:], new, sig)
    return make_term(sig, t.symbol, args)


def rule_applications(t: Term, sig: Signature, label=None, init=None, top_only=False,
                      budget: Budget | None = None):
    """All one-step rewrites of a normalized ground term.

    Returns a list of (label, result) pairs, one per distinct result
    term and label, in a deterministic order: rules in declaration
    order, positions pre-order, matches in enumeration order.
    """
    if not t.is_ground():
        raise IllFormed(f"cannot rewrite non-ground term {pretty(t)}")
    if budget is None:
        budget = Budget()
    init = init or {}
    out = []
    seen = set()
    rules = [r for r in sig.rules if label is None or r.label == label]
    if not rules:
        return out
    spots = [((), t)] if top_only else list(positions(t))
    for rule in rules:
        lhs = apply_subst(init, rule.lhs, sig)
        rhs = rule.rhs
        cond = rule.condition
        for path, sub in spots:
            for s in match(lhs, sub, sig, init):
                for s2 in eval_condition(cond, s, sig, budget):
                    replacement = apply_subst(s2, rhs, sig)
                    if not replacement.is_ground():
                        raise IllFormed(
                            f"rule {rule.label!r} leaves unbound variables in its result")
                    result = _normalize(replace_at(t, path, replacement, sig), sig, budget)
                    key = (rule.label, result)
                    if key not in seen:
                        seen.add(key)
                        out.append(key)
    return out


def eval_prop(state: Term, prop: Term, sig: Signature, budget: Budget | None = None) -> bool:
    """True iff `state |= prop` normalizes to the builtin true."""
    query = make_term(sig, SATISFIES, (state, prop))
    return normalize(query, sig, budget) == true_term(sig)


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

def _mixfix_parts(name):
    """Split an operator name into literal tokens and argument holes."""
    parts = []
    token = ""
    for ch in name:
        if ch == "_":
            if token:
                parts.append(token)
                token = ""
            parts.append(None)
        else:
            token += ch
    if token:
        parts.append(token)
    return parts


def _print_level(symbol: str) -> int:
    """Binding looseness for printing: higher binds looser."""
    if "_" not in symbol:
        return 0
    if symbol == "__":
        return 10
    if symbol == SATISFIES:
        return 30
    parts = _mixfix_parts(symbol)
    if len(parts) == 3 and parts[0] is None and parts[2] is None:
        return 20  # plain infix binary
    if parts[0] is None:
        return 12  # left-exposed bracket operator such as _[_]
    return 0


def pretty(t: Term) -> str:
    """Render a term in the surface syntax, with minimal parentheses."""
    if t.is_var:
        return t.symbol
    if "_" not in t.symbol:
        if not t.args:
            return t.symbol
        return f"{t.symbol}({', '.join(pretty(a) for a in t.args)})"
    parts = _mixfix_parts(t.symbol)
    holes = parts.count(None)
    args = list(t.args)
    if len(args) > holes and holes == 2:
        # flattened AC term: fold the extra children into the last hole
        args = [args[0], list(args[1:])]
    level = _print_level(t.symbol)
    limit = 30 if level == 30 else 20 if level == 20 else 12
    pieces = []
    it = iter(args)
    delimited = False
    for p in parts:
        if p is None:
            a = next(it)
            slot_limit = 1000 if delimited else limit
            if isinstance(a, list):
                pieces.extend(_child(x, slot_limit) for x in a)
            else:
                pieces.append(_child(a, slot_limit))
        else:
            pieces.append(p)
            if p in ("[", "(", "{"):
                delimited = True
            elif p in ("]", ")", "}"):
                delimited = False
    text = " ".join(pieces)
    return text.replace("[ ", "[").replace(" ]", "]")


def _child(t: Term, slot_limit: int) -> str:
    s = pretty(t)
    if not t.is_var and _print_level(t.symbol) >= slot_limit:
        return f"({s})"
    return s
