"""Surface syntax: specification files, terms, strategies, formulas.

The file format is a fixed subset of an algebraic specification
language: modules with sort/subsort/op/var declarations, equations,
labeled rules, strategy declarations and definitions.  Statements end
with a standalone ` .` and `***` starts a line comment.  Mixfix
operators are limited to juxtaposition (`__`), infix binary patterns
such as `_|_`, the bracket pattern `_[_]`, and the builtin `_|=_`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import formulas as F
from . import semantics as S
from .errors import (
    AmbiguousParse, DuplicateDeclaration, SortCheckError, SpecSyntaxError,
    UnknownModule, UnknownRuleLabel, UnknownStrategy, UnsupportedFeature,
)
from .terms import (
    BoolFrag, EqualityFrag, Equation, MatchFrag, OpDecl, Rule, Signature,
    Term, builtin_prelude, make_term, make_var, pretty,
)

SELF_DELIMITING = set("()[]{},")

ATTRIBUTE_WORDS = {"assoc", "comm", "ctor", "owise", "id:", "prec", "nonexec", "metadata"}


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


def tokenize(text: str):
    """Split source text into tokens; `***` comments run to end of line."""
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        comment = line.find("***")
        if comment >= 0:
            line = line[:comment]
        col = 0
        word_start, word = None, ""

        def flush():
            nonlocal word, word_start
            if word:
                tokens.append(Token(word, lineno, word_start + 1))
                word = ""
                word_start = None

        for col, ch in enumerate(line):
            if ch.isspace():
                flush()
            elif ch in SELF_DELIMITING:
                flush()
                tokens.append(Token(ch, lineno, col + 1))
            else:
                if not word:
                    word_start = col
                word += ch
        flush()
    return tokens


class _Cursor:
    def __init__(self, tokens, end="end of input"):
        self.tokens = tokens
        self.pos = 0
        self.end_name = end

    def peek(self, offset=0):
        i = self.pos + offset
        return self.tokens[i].text if i < len(self.tokens) else None

    def next(self):
        if self.pos >= len(self.tokens):
            raise SpecSyntaxError(f"unexpected {self.end_name}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text):
        tok = self.next()
        if tok.text != text:
            raise SpecSyntaxError(f"unexpected token {tok.text!r}",
                                  tok.line, tok.column, expected=[text])
        return tok

    def done(self):
        return self.pos >= len(self.tokens)


# ---------------------------------------------------------------------------
# Specification files
# ---------------------------------------------------------------------------

@dataclass
class RawOp:
    names: list
    arg_sorts: list
    result: str
    attrs: dict
    line: int


@dataclass
class RawEq:
    lhs: list
    rhs: list
    condition: list | None
    owise: bool
    line: int


@dataclass
class RawRule:
    label: str
    lhs: list
    rhs: list
    condition: list | None
    line: int


@dataclass
class RawStratDecl:
    names: list
    arg_sorts: list
    subject_sort: str
    line: int


@dataclass
class RawSDef:
    name: str
    params: list          # list of token lists
    body: list
    condition: list | None
    line: int


@dataclass
class ModuleDecl:
    kind: str
    name: str
    imports: list = field(default_factory=list)       # (mode, name, line)
    sort_decls: list = field(default_factory=list)    # [names]
    subsort_decls: list = field(default_factory=list)  # [[names], [names], ...]
    op_decls: list = field(default_factory=list)
    var_decls: list = field(default_factory=list)     # (names, sort, line)
    equations: list = field(default_factory=list)
    rules: list = field(default_factory=list)
    strat_decls: list = field(default_factory=list)
    strat_defs: list = field(default_factory=list)

    def var_table(self):
        table = {}
        for names, sort, line in self.var_decls:
            for n in names:
                if n in table and table[n] != sort:
                    raise DuplicateDeclaration(
                        f"variable {n!r} redeclared with a different sort (line {line})")
                table[n] = sort
        return table


@dataclass
class SourceSpec:
    modules: list = field(default_factory=list)

    def module(self, name):
        for m in self.modules:
            if m.name == name:
                return m
        raise UnknownModule(f"module {name!r} is not declared")

    def last_module(self):
        if not self.modules:
            raise UnknownModule("the specification declares no modules")
        return self.modules[-1]


_MODULE_ENDS = {"mod": "endm", "fmod": "endfm", "smod": "endsm"}
_IMPORT_MODES = {"protecting", "including", "extending"}


def parse_spec(text: str) -> SourceSpec:
    """Parse a specification file into its structural AST.

    Term-level parts (equation sides, rule sides, strategy bodies) are
    kept as token sequences; resolve_module parses them against the
    flattened signature.
    """
    cur = _Cursor(tokenize(text))
    spec = SourceSpec()
    declared = set()
    while not cur.done():
        opener = cur.next()
        if opener.text not in _MODULE_ENDS:
            raise SpecSyntaxError(f"unexpected token {opener.text!r}",
                                  opener.line, opener.column,
                                  expected=sorted(_MODULE_ENDS))
        name = cur.next().text
        if name in declared:
            raise DuplicateDeclaration(f"module {name!r} declared twice")
        declared.add(name)
        cur.expect("is")
        mod = ModuleDecl(opener.text, name)
        end = _MODULE_ENDS[opener.text]
        while True:
            if cur.peek() is None:
                raise SpecSyntaxError(f"missing {end} for module {name}",
                                      opener.line, opener.column)
            if cur.peek() == end:
                cur.next()
                break
            _parse_statement(cur, mod, declared)
        spec.modules.append(mod)
    return spec


def _statement_tokens(cur):
    """Consume tokens up to the terminating standalone dot."""
    out = []
    while True:
        tok = cur.next()
        if tok.text == ".":
            return out
        out.append(tok)


def _parse_statement(cur, mod, declared_modules):
    head = cur.next()
    kw = head.text
    body = _statement_tokens(cur)
    texts = [t.text for t in body]

    if kw in _IMPORT_MODES:
        if len(body) != 1:
            raise SpecSyntaxError("import expects a single module name",
                                  head.line, head.column)
        target = body[0].text
        if target not in declared_modules:
            raise UnknownModule(
                f"import of {target!r} (line {head.line}) precedes its declaration")
        mod.imports.append((kw, target, head.line))
    elif kw in ("sort", "sorts"):
        _check_names(body, head)
        names = texts
        for n in names:
            if any(n in d for d in mod.sort_decls):
                raise DuplicateDeclaration(f"sort {n!r} declared twice (line {head.line})")
        mod.sort_decls.append(names)
    elif kw in ("subsort", "subsorts"):
        groups = _split_on(texts, "<")
        if len(groups) < 2 or any(not g for g in groups):
            raise SpecSyntaxError("malformed subsort declaration", head.line, head.column)
        mod.subsort_decls.append(groups)
    elif kw in ("op", "ops"):
        mod.op_decls.append(_parse_op_decl(kw, texts, head))
    elif kw in ("var", "vars"):
        if ":" not in texts:
            raise SpecSyntaxError("variable declaration needs `: Sort`",
                                  head.line, head.column)
        i = texts.index(":")
        names, sort = texts[:i], texts[i + 1:]
        if not names or len(sort) != 1:
            raise SpecSyntaxError("malformed variable declaration", head.line, head.column)
        mod.var_decls.append((names, sort[0], head.line))
    elif kw in ("eq", "ceq"):
        mod.equations.append(_parse_eq(kw, texts, head))
    elif kw in ("rl", "crl"):
        mod.rules.append(_parse_rule(kw, texts, head))
    elif kw in ("strat", "strats"):
        mod.strat_decls.append(_parse_strat_decl(texts, head))
    elif kw in ("sd", "csd"):
        mod.strat_defs.append(_parse_sdef(kw, texts, head))
    else:
        raise SpecSyntaxError(f"unknown declaration keyword {kw!r}",
                              head.line, head.column)


def _check_names(body, head):
    for t in body:
        if t.text in SELF_DELIMITING:
            raise SpecSyntaxError(f"unexpected {t.text!r} in declaration",
                                  t.line, t.column)


def _split_on(texts, sep):
    groups, cur = [], []
    for t in texts:
        if t == sep:
            groups.append(cur)
            cur = []
        else:
            cur.append(t)
    groups.append(cur)
    return groups


def _parse_op_decl(kw, texts, head):
    if ":" not in texts:
        raise SpecSyntaxError("operator declaration needs `:`", head.line, head.column)
    i = texts.index(":")
    # a single `op` name may span several tokens (bracket mixfix like _[_])
    names = ["".join(texts[:i])] if kw == "op" else texts[:i]
    rest = texts[i + 1:]
    if not names or not names[0]:
        raise SpecSyntaxError("operator declaration without names", head.line, head.column)
    attrs = {}
    if rest and rest[-1] == "]":
        depth, j = 0, len(rest) - 1
        while j >= 0:
            if rest[j] == "]":
                depth += 1
            elif rest[j] == "[":
                depth -= 1
                if depth == 0:
                    break
            j -= 1
        if j < 0:
            raise SpecSyntaxError("unbalanced attribute brackets", head.line, head.column)
        attrs = _parse_attrs(rest[j + 1:-1], head)
        rest = rest[:j]
    if "->" not in rest:
        raise SpecSyntaxError("operator declaration needs `->`", head.line, head.column)
    k = rest.index("->")
    arg_sorts, result = rest[:k], rest[k + 1:]
    if len(result) != 1:
        raise SpecSyntaxError("operator declaration needs one result sort",
                              head.line, head.column)
    return RawOp(names, arg_sorts, result[0], attrs, head.line)


def _parse_attrs(texts, head):
    attrs = {"assoc": False, "comm": False, "ctor": False, "id": None, "prec": None}
    i = 0
    while i < len(texts):
        word = texts[i]
        if word in ("assoc", "comm", "ctor"):
            attrs[word] = True
            i += 1
        elif word == "id:":
            j = i + 1
            value = []
            while j < len(texts) and texts[j] not in ATTRIBUTE_WORDS:
                value.append(texts[j])
                j += 1
            if not value:
                raise SpecSyntaxError("id: attribute needs a value", head.line, head.column)
            attrs["id"] = value
            i = j
        elif word == "prec":
            if i + 1 >= len(texts) or not texts[i + 1].isdigit():
                raise SpecSyntaxError("prec attribute needs a number", head.line, head.column)
            attrs["prec"] = int(texts[i + 1])
            i += 2
        else:
            raise SpecSyntaxError(f"unknown operator attribute {word!r}",
                                  head.line, head.column)
    return attrs


def _split_trailing_attrs(texts, head):
    """Split `... [attrs]` where the bracket group holds only attribute words."""
    if texts and texts[-1] == "]":
        depth, j = 0, len(texts) - 1
        while j >= 0:
            if texts[j] == "]":
                depth += 1
            elif texts[j] == "[":
                depth -= 1
                if depth == 0:
                    break
            j -= 1
        if j >= 0:
            inner = texts[j + 1:-1]
            if inner and all(w in ATTRIBUTE_WORDS or w.isdigit() for w in inner):
                return texts[:j], inner
    return texts, []


def _parse_eq(kw, texts, head):
    texts, attr_words = _split_trailing_attrs(texts, head)
    owise = "owise" in attr_words
    condition = None
    if kw == "ceq":
        if "if" not in texts:
            raise SpecSyntaxError("ceq needs an `if` condition", head.line, head.column)
        i = _rindex(texts, "if")
        texts, condition = texts[:i], texts[i + 1:]
    if "=" not in texts:
        raise SpecSyntaxError("equation needs `=`", head.line, head.column)
    i = texts.index("=")
    lhs, rhs = texts[:i], texts[i + 1:]
    if not lhs or not rhs:
        raise SpecSyntaxError("equation with an empty side", head.line, head.column)
    return RawEq(lhs, rhs, condition, owise, head.line)


def _parse_rule(kw, texts, head):
    if len(texts) < 4 or texts[0] != "[":
        raise SpecSyntaxError("rule needs a `[label]`", head.line, head.column)
    if texts[2] != "]" or texts[3] != ":":
        raise SpecSyntaxError("malformed rule label", head.line, head.column)
    label = texts[1]
    rest = texts[4:]
    condition = None
    if kw == "crl":
        if "if" not in rest:
            raise SpecSyntaxError("crl needs an `if` condition", head.line, head.column)
        i = _rindex(rest, "if")
        rest, condition = rest[:i], rest[i + 1:]
    if "=>" not in rest:
        raise SpecSyntaxError("rule needs `=>`", head.line, head.column)
    i = rest.index("=>")
    lhs, rhs = rest[:i], rest[i + 1:]
    if not lhs or not rhs:
        raise SpecSyntaxError("rule with an empty side", head.line, head.column)
    return RawRule(label, lhs, rhs, condition, head.line)


def _rindex(texts, word):
    return len(texts) - 1 - texts[::-1].index(word)


def _parse_strat_decl(texts, head):
    if "@" not in texts:
        raise SpecSyntaxError("strategy declaration needs `@ Sort`", head.line, head.column)
    i = texts.index("@")
    left, right = texts[:i], texts[i + 1:]
    if len(right) != 1:
        raise SpecSyntaxError("strategy declaration needs one subject sort",
                              head.line, head.column)
    if ":" in left:
        j = left.index(":")
        names, arg_sorts = left[:j], left[j + 1:]
    else:
        names, arg_sorts = left, []
    if not names:
        raise SpecSyntaxError("strategy declaration without names", head.line, head.column)
    return RawStratDecl(names, arg_sorts, right[0], head.line)


def _parse_sdef(kw, texts, head):
    if ":=" not in texts:
        raise SpecSyntaxError("strategy definition needs `:=`", head.line, head.column)
    i = texts.index(":=")
    headpart, body = texts[:i], texts[i + 1:]
    condition = None
    if kw == "csd":
        if "if" not in body:
            raise SpecSyntaxError("csd needs an `if` condition", head.line, head.column)
        j = _rindex(body, "if")
        body, condition = body[:j], body[j + 1:]
    if not headpart:
        raise SpecSyntaxError("strategy definition without a head", head.line, head.column)
    name = headpart[0]
    params = []
    if len(headpart) > 1:
        if headpart[1] != "(" or headpart[-1] != ")":
            raise SpecSyntaxError("malformed strategy definition head",
                                  head.line, head.column)
        params = _split_args(headpart[2:-1])
    return RawSDef(name, params, body, condition, head.line)


def _split_args(texts):
    out, cur, depth = [], [], 0
    for t in texts:
        if t in "([{":
            depth += 1
        elif t in ")]}":
            depth -= 1
        if t == "," and depth == 0:
            out.append(cur)
            cur = []
        else:
            cur.append(t)
    if cur or out:
        out.append(cur)
    return out


# ---------------------------------------------------------------------------
# Term parsing
# ---------------------------------------------------------------------------

def parse_term(text, sig: Signature, variables=None) -> Term:
    """Parse a term; raises AmbiguousParse when several sort-valid
    readings survive canonicalization."""
    tokens = [t.text for t in tokenize(text)] if isinstance(text, str) else list(text)
    if not tokens:
        raise SpecSyntaxError("empty term")
    parser = _TermParser(tokens, sig, variables or sig.variables)
    results = parser.parse_span(0, len(tokens))
    if not results:
        raise SpecSyntaxError(f"cannot parse term {' '.join(tokens)!r}")
    if len(results) > 1:
        raise AmbiguousParse(" ".join(tokens), [pretty(t) for t in results])
    return next(iter(results))


class _TermParser:
    def __init__(self, tokens, sig, variables):
        self.tokens = tokens
        self.sig = sig
        self.variables = variables
        self.memo = {}
        self.infix_ops = []
        self.has_juxt = "__" in sig.ops
        self.has_bracket = "_[_]" in sig.ops
        for name in sig.ops:
            if "_" not in name or name in ("__", "_[_]"):
                continue
            parts = name.split("_")
            if len(parts) == 3 and parts[0] == "" and parts[2] == "" and parts[1]:
                self.infix_ops.append((parts[1], name))
        self.infix_ops.sort()

    def parse_span(self, i, j):
        key = (i, j)
        cached = self.memo.get(key)
        if cached is not None:
            return cached
        self.memo[key] = {}  # cycle guard; spans only shrink, so unused
        out = {}

        def add(term):
            out.setdefault(term, None)

        toks = self.tokens
        n = j - i
        if n <= 0:
            return {}
        if n == 1:
            self._single(toks[i], add)
        if n >= 3 and toks[i] == "(" and self._matching(i) == j - 1:
            for t in self.parse_span(i + 1, j - 1):
                add(t)
        if n >= 3 and toks[i] not in SELF_DELIMITING and toks[i + 1] == "(" \
                and self._matching(i + 1) == j - 1:
            self._prefix(toks[i], i + 2, j - 1, add)
        if self.has_juxt and n >= 2:
            for k in self._split_points(i, j):
                for a in self.parse_span(i, k):
                    for b in self.parse_span(k, j):
                        self._apply("__", (a, b), add)
        for lit, name in self.infix_ops:
            for k in self._occurrences(lit, i, j):
                for a in self.parse_span(i, k):
                    for b in self.parse_span(k + 1, j):
                        self._apply(name, (a, b), add)
        if self.has_bracket and n >= 3 and toks[j - 1] == "]":
            depth = 0
            for k in range(i, j - 1):
                t = toks[k]
                if t == "[" and depth == 0 and self._matching(k) == j - 1:
                    for a in self.parse_span(i, k):
                        for b in self.parse_span(k + 1, j - 1):
                            self._apply("_[_]", (a, b), add)
                if t in "([{":
                    depth += 1
                elif t in ")]}":
                    depth -= 1
        self.memo[key] = out
        return out

    def _single(self, tok, add):
        decls = self.sig.ops.get(tok)
        if decls:
            for d in decls:
                if not d.arg_sorts:
                    add(make_term(self.sig, tok, ()))
                    break
        sort = self.variables.get(tok)
        if sort is not None:
            add(make_var(tok, sort))
        elif ":" in tok and not tok.endswith(":"):
            name, _, vsort = tok.rpartition(":")
            if name and self.sig.has_sort(vsort):
                add(make_var(name, vsort))

    def _prefix(self, name, i, j, add):
        decls = self.sig.ops.get(name)
        if not decls or all(not d.arg_sorts for d in decls):
            return
        groups = self._comma_groups(i, j)
        if any(not g for g in groups):
            return
        arg_sets = [self.parse_span(a, b) for a, b in groups]
        if any(not s for s in arg_sets):
            return
        import itertools as it
        for combo in it.product(*arg_sets):
            self._apply(name, combo, add)

    def _apply(self, name, args, add):
        from .errors import IllFormed
        try:
            add(make_term(self.sig, name, args))
        except IllFormed:
            pass

    def _comma_groups(self, i, j):
        groups, start, depth = [], i, 0
        for k in range(i, j):
            t = self.tokens[k]
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
            elif t == "," and depth == 0:
                groups.append((start, k))
                start = k + 1
        groups.append((start, j))
        return groups

    def _matching(self, i):
        """Index of the bracket matching the opener at i, or -1."""
        opener = self.tokens[i]
        closer = {"(": ")", "[": "]", "{": "}"}[opener]
        depth = 0
        for k in range(i, len(self.tokens)):
            t = self.tokens[k]
            if t == opener:
                depth += 1
            elif t == closer:
                depth -= 1
                if depth == 0:
                    return k
        return -1

    def _split_points(self, i, j):
        depth = 0
        for k in range(i + 1, j):
            t = self.tokens[k - 1]
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
            if depth == 0:
                yield k

    def _occurrences(self, lit, i, j):
        depth = 0
        for k in range(i, j):
            t = self.tokens[k]
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
            elif t == lit and depth == 0:
                yield k


def parse_condition(texts, sig, variables):
    """Parse a condition token sequence: fragments joined by /\\ ."""
    frags = []
    for group in _split_top(texts, "/\\"):
        if not group:
            raise SpecSyntaxError("empty condition fragment")
        if ":=" in group:
            i = group.index(":=")
            frags.append(MatchFrag(parse_term(group[:i], sig, variables),
                                   parse_term(group[i + 1:], sig, variables)))
        elif "=" in group:
            i = group.index("=")
            frags.append(EqualityFrag(parse_term(group[:i], sig, variables),
                                      parse_term(group[i + 1:], sig, variables)))
        else:
            frags.append(BoolFrag(parse_term(group, sig, variables)))
    return tuple(frags)


def _split_top(texts, sep):
    out, cur, depth = [], [], 0
    for t in texts:
        if t in "([{":
            depth += 1
        elif t in ")]}":
            depth -= 1
        if t == sep and depth == 0:
            out.append(cur)
            cur = []
        else:
            cur.append(t)
    out.append(cur)
    return out


# ---------------------------------------------------------------------------
# Strategy expressions
# ---------------------------------------------------------------------------

_TERM_BOUNDARY = {"s.t.", "?", ":", ";", "or-else", ",", "by", "using", "*", "+", "!"}


def parse_strategy(text, module: S.Module, variables=None):
    """Parse a strategy expression against a resolved module."""
    tokens = [t.text for t in tokenize(text)] if isinstance(text, str) else list(text)
    sig = module.signature
    var_table = dict(sig.variables)
    if variables:
        var_table.update(variables)
    parser = _StratParser(tokens, sig, set(module.strategies), var_table)
    expr = parser.parse_expr()
    if not parser.done():
        raise SpecSyntaxError(f"unexpected token {parser.peek()!r} after strategy")
    return expr


class _StratParser:
    def __init__(self, tokens, sig, strat_names, variables):
        self.toks = tokens
        self.pos = 0
        self.sig = sig
        self.strat_names = strat_names
        self.variables = variables

    # cursor helpers -------------------------------------------------
    def peek(self, offset=0):
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def take(self):
        t = self.peek()
        if t is None:
            raise SpecSyntaxError("unexpected end of strategy expression")
        self.pos += 1
        return t

    def expect(self, text):
        t = self.take()
        if t != text:
            raise SpecSyntaxError(f"unexpected token {t!r} in strategy",
                                  expected=[text])

    def done(self):
        return self.peek() is None

    # grammar --------------------------------------------------------
    def parse_expr(self):
        return self.parse_cond()

    def parse_cond(self):
        left = self.parse_orelse()
        if self.peek() == "?":
            self.take()
            pos = self.parse_orelse()
            self.expect(":")
            neg = self.parse_cond()
            return S.CondC(left, pos, neg)
        return left

    def parse_orelse(self):
        left = self.parse_union()
        if self.peek() == "or-else":
            self.take()
            return S.OrElse(left, self.parse_orelse())
        return left

    def parse_union(self):
        left = self.parse_concat()
        if self.peek() == "|":
            self.take()
            return S.Union(left, self.parse_union())
        return left

    def parse_concat(self):
        left = self.parse_postfix()
        if self.peek() == ";":
            self.take()
            return S.Concat(left, self.parse_concat())
        return left

    def parse_postfix(self):
        expr = self.parse_primary()
        while self.peek() in ("*", "+", "!"):
            mark = self.take()
            expr = {"*": S.Star, "+": S.Plus, "!": S.Bang}[mark](expr)
        return expr

    def parse_primary(self):
        tok = self.peek()
        if tok is None:
            raise SpecSyntaxError("unexpected end of strategy expression")
        if tok == "(":
            self.take()
            expr = self.parse_expr()
            self.expect(")")
            return expr
        if tok == "idle":
            self.take()
            return S.IDLE
        if tok == "fail":
            self.take()
            return S.FAIL
        if tok in ("not", "try", "test") and self.peek(1) == "(":
            self.take()
            self.take()
            inner = self.parse_expr()
            self.expect(")")
            return {"not": S.NotC, "try": S.TryC, "test": S.TestC}[tok](inner)
        if tok == "top" and self.peek(1) == "(":
            self.take()
            self.take()
            inner = self.parse_primary()
            self.expect(")")
            if not isinstance(inner, S.RuleApp):
                raise SpecSyntaxError("top(...) expects a rule application")
            return S.RuleApp(inner.label, inner.init, top=True)
        if tok in ("match", "amatch", "xmatch"):
            if tok == "xmatch":
                raise UnsupportedFeature("xmatch (matching with extension) is not supported")
            self.take()
            pattern, condition = self._pattern_and_condition()
            return S.MatchTest(tok == "amatch", pattern, condition)
        if tok in ("matchrew", "amatchrew", "xmatchrew"):
            if tok == "xmatchrew":
                raise UnsupportedFeature("xmatchrew (matching with extension) is not supported")
            self.take()
            return self._matchrew(tok == "amatchrew")
        return self._call_or_rule()

    def _term_tokens(self, stop=()):
        out, depth = [], 0
        while True:
            t = self.peek()
            if t is None:
                break
            if depth == 0 and (t in _TERM_BOUNDARY or t in stop or t in (")", "]", "}")):
                break
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
            out.append(self.take())
        if not out:
            raise SpecSyntaxError("expected a term in strategy expression")
        return out

    def _pattern_and_condition(self, stop=()):
        pattern_toks = self._term_tokens(stop=stop)
        pattern = parse_term(pattern_toks, self.sig, self.variables)
        condition = ()
        if self.peek() == "s.t.":
            self.take()
            cond_toks = []
            depth = 0
            while True:
                t = self.peek()
                if t is None:
                    break
                if depth == 0 and (t in stop or t in (")", "]", "}", "?", ":", ";",
                                                      "or-else", ",", "by")):
                    break
                if t in "([{":
                    depth += 1
                elif t in ")]}":
                    depth -= 1
                cond_toks.append(self.take())
            condition = parse_condition(cond_toks, self.sig, self.variables)
        return pattern, condition

    def _matchrew(self, anywhere):
        pattern, condition = self._pattern_and_condition(stop=("by",))
        self.expect("by")
        pattern_vars = {name: sort for name, sort in pattern.variables()}
        bindings = []
        while True:
            var_tok = self.take()
            sort = pattern_vars.get(var_tok)
            if sort is None:
                raise SpecSyntaxError(
                    f"matchrew variable {var_tok!r} does not occur in the pattern")
            self.expect("using")
            body = self.parse_cond()
            bindings.append((make_var(var_tok, sort), body))
            if self.peek() == ",":
                self.take()
                continue
            break
        return S.MatchRew(anywhere, pattern, condition, tuple(bindings))

    def _call_or_rule(self):
        name = self.take()
        if name in SELF_DELIMITING or name in _TERM_BOUNDARY:
            raise SpecSyntaxError(f"unexpected token {name!r} in strategy")
        if name in self.strat_names:
            args = ()
            if self.peek() == "(":
                self.take()
                arg_list = []
                while True:
                    toks = self._term_tokens()
                    arg_list.append(parse_term(toks, self.sig, self.variables))
                    if self.peek() == ",":
                        self.take()
                        continue
                    break
                self.expect(")")
                args = tuple(arg_list)
            return S.Call(name, args)
        if name in self.sig.rule_labels:
            init = ()
            if self.peek() == "[":
                self.take()
                pairs = []
                while True:
                    var_tok = self.take()
                    self.expect("<-")
                    toks = self._term_tokens(stop=("<-",))
                    pairs.append((var_tok, parse_term(toks, self.sig, self.variables)))
                    if self.peek() == ",":
                        self.take()
                        continue
                    break
                self.expect("]")
                init = tuple(pairs)
            if self.peek() == "{":
                raise UnsupportedFeature(
                    "rule applications controlling rewriting conditions are not supported")
            return S.RuleApp(name, init)
        if self.peek() == "(":
            raise UnknownStrategy(f"call to undeclared strategy {name!r}")
        raise UnknownRuleLabel(f"{name!r} is neither a rule label nor a strategy")


# ---------------------------------------------------------------------------
# Module resolution
# ---------------------------------------------------------------------------

def resolve_module(spec: SourceSpec, name: str | None = None) -> S.Module:
    """Flatten a module with its imports into a Signature and strategy table."""
    mod = spec.last_module() if name is None else spec.module(name)
    chain = []
    seen = set()

    def collect(m):
        if m.name in seen:
            return
        seen.add(m.name)
        for _, target, _ in m.imports:
            collect(spec.module(target))
        chain.append(m)

    collect(mod)

    sig = Signature()
    builtin_prelude(sig)

    for m in chain:
        for names in m.sort_decls:
            for n in names:
                sig.add_sort(n)
    for m in chain:
        for groups in m.subsort_decls:
            for lower_group, upper_group in zip(groups, groups[1:]):
                for low in lower_group:
                    for up in upper_group:
                        sig.add_subsort(low, up)
    sig.close_subsorts()

    pending_ids = []
    for m in chain:
        for raw in m.op_decls:
            for opname in raw.names:
                decl = OpDecl(opname, tuple(raw.arg_sorts), raw.result,
                              assoc=raw.attrs.get("assoc", False),
                              comm=raw.attrs.get("comm", False),
                              ctor=raw.attrs.get("ctor", False))
                _validate_op(decl, raw)
                existing = sig.ops.get(opname, [])
                if any(e.arg_sorts == decl.arg_sorts and e.result_sort == decl.result_sort
                       for e in existing):
                    raise DuplicateDeclaration(
                        f"operator {opname!r} declared twice (line {raw.line})")
                sig.add_op(decl)
                if raw.attrs.get("id"):
                    pending_ids.append((opname, decl, raw))
    for opname, decl, raw in pending_ids:
        identity = parse_term(raw.attrs["id"], sig, {})
        decls = sig.ops[opname]
        decls[decls.index(decl)] = OpDecl(
            decl.name, decl.arg_sorts, decl.result_sort,
            assoc=decl.assoc, comm=decl.comm, identity=identity, ctor=decl.ctor)

    var_tables = {m.name: m.var_table() for m in chain}
    for m in chain:
        for n, s in var_tables[m.name].items():
            if not sig.has_sort(s):
                raise SortCheckError(f"variable {n!r} has unknown sort {s!r}")
            sig.variables[n] = s

    for m in chain:
        variables = var_tables[m.name]
        for raw in m.rules:
            if not raw.label:
                raise SpecSyntaxError("rule with an empty label")
            lhs = _statement_term(raw.lhs, sig, variables, raw, "rule")
            rhs = _statement_term(raw.rhs, sig, variables, raw, "rule")
            cond = parse_condition(raw.condition, sig, variables) if raw.condition else ()
            if lhs.is_var:
                raise SortCheckError(
                    f"left-hand side of rule {raw.label!r} is a lone variable (line {raw.line})")
            sig.add_rule(Rule(raw.label, lhs, rhs, cond))
        for raw in m.equations:
            lhs = _statement_term(raw.lhs, sig, variables, raw, "equation")
            rhs = _statement_term(raw.rhs, sig, variables, raw, "equation")
            cond = parse_condition(raw.condition, sig, variables) if raw.condition else ()
            if lhs.is_var:
                raise SortCheckError(
                    f"left-hand side of an equation is a lone variable (line {raw.line})")
            sig.add_equation(Equation(lhs, rhs, cond, raw.owise))

    strat_names = set()
    for m in chain:
        for decl in m.strat_decls:
            strat_names.update(decl.names)
    table = {n: [] for n in sorted(strat_names)}
    module = S.Module(sig, table)

    for m in chain:
        variables = var_tables[m.name]
        for raw in m.strat_defs:
            if raw.name not in strat_names:
                raise UnknownStrategy(
                    f"definition for undeclared strategy {raw.name!r} (line {raw.line})")
            params = tuple(parse_term(p, sig, variables) for p in raw.params)
            parser = _StratParser(raw.body, sig, strat_names, variables)
            body = parser.parse_expr()
            if not parser.done():
                raise SpecSyntaxError(
                    f"trailing tokens in strategy definition {raw.name!r} (line {raw.line})")
            cond = parse_condition(raw.condition, sig, variables) if raw.condition else ()
            table[raw.name].append(S.StratDef(params, body, cond))
    return module


def _validate_op(decl: OpDecl, raw):
    if decl.assoc and len(decl.arg_sorts) != 2:
        raise SortCheckError(
            f"assoc operator {decl.name!r} must be binary (line {raw.line})")
    if decl.comm and len(decl.arg_sorts) != 2:
        raise SortCheckError(
            f"comm operator {decl.name!r} must be binary (line {raw.line})")
    if raw.attrs.get("id") and not (decl.assoc or decl.comm):
        raise SortCheckError(
            f"id: on {decl.name!r} requires assoc or comm (line {raw.line})")


def _statement_term(tokens, sig, variables, raw, what):
    try:
        return parse_term(tokens, sig, variables)
    except SpecSyntaxError as e:
        raise SpecSyntaxError(f"in {what} at line {raw.line}: {e}") from e


def load_file(path, module_name=None):
    """Parse and resolve a specification file; returns the resolved module."""
    with open(path, encoding="utf-8") as fh:
        spec = parse_spec(fh.read())
    return resolve_module(spec, module_name)


# ---------------------------------------------------------------------------
# Formula parsing
# ---------------------------------------------------------------------------

_FORMULA_RESERVED = {
    "True", "False", "~", "/\\", "\\/", "->", "<->", "O", "U", "<>", "[]",
    "A", "E", "mu", "nu", ".", "(", ")", "[", "]", "<", ">", "<.>", ",",
}


def parse_formula(text: str, module: S.Module):
    """Parse a temporal formula; returns (formula, least logic class)."""
    sig = module.signature
    tokens = tokenize(text)
    parser = _FormulaParser([t.text for t in tokens], sig)
    f = parser.parse_formula()
    if not parser.done():
        raise SpecSyntaxError(f"unexpected token {parser.peek()!r} after formula")
    logic = F.classify(f)
    if logic is F.LogicClass.MUCALC:
        F.check_mu_formula(f)
    return f, logic


class _FormulaParser:
    def __init__(self, tokens, sig):
        self.toks = tokens
        self.pos = 0
        self.sig = sig

    def peek(self, offset=0):
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def take(self):
        t = self.peek()
        if t is None:
            raise SpecSyntaxError("unexpected end of formula")
        self.pos += 1
        return t

    def expect(self, text):
        t = self.take()
        if t != text:
            raise SpecSyntaxError(f"unexpected token {t!r} in formula", expected=[text])

    def done(self):
        return self.peek() is None

    # precedence: unary < and < or < until < implies/iff; mu/nu maximal
    def parse_formula(self):
        return self.parse_iff()

    def parse_iff(self):
        left = self.parse_implies()
        while self.peek() == "<->":
            self.take()
            left = F.Iff(left, self.parse_implies())
        return left

    def parse_implies(self):
        left = self.parse_until()
        if self.peek() == "->":
            self.take()
            return F.Implies(left, self.parse_implies())
        return left

    def parse_until(self):
        left = self.parse_or()
        if self.peek() == "U":
            self.take()
            return F.Until(left, self.parse_until())
        return left

    def parse_or(self):
        left = self.parse_and()
        while self.peek() == "\\/":
            self.take()
            left = F.Or(left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_unary()
        while self.peek() == "/\\":
            self.take()
            left = F.And(left, self.parse_unary())
        return left

    def parse_unary(self):
        tok = self.peek()
        if tok is None:
            raise SpecSyntaxError("unexpected end of formula")
        if tok == "~":
            self.take()
            return F.Not(self.parse_unary())
        if tok == "O":
            self.take()
            return F.Next(self.parse_unary())
        if tok == "<>":
            self.take()
            return F.Eventually(self.parse_unary())
        if tok == "A":
            self.take()
            return F.ForallPath(self.parse_unary())
        if tok == "E":
            self.take()
            return F.ExistsPath(self.parse_unary())
        if tok == "<.>":
            self.take()
            return F.Diamond(F.DOT, self.parse_unary())
        if tok == "[":
            if self.peek(1) == "]":
                self.take()
                self.take()
                return F.Always(self.parse_unary())
            self.take()
            spec = self._action_spec("]")
            return F.Box(spec, self.parse_unary())
        if tok == "<":
            self.take()
            spec = self._action_spec(">")
            return F.Diamond(spec, self.parse_unary())
        if tok in ("mu", "nu"):
            self.take()
            var = self.take()
            if not var[:1].isupper():
                raise SpecSyntaxError(f"fixpoint variable {var!r} must start uppercase")
            self.expect(".")
            body = self.parse_formula()
            return (F.Mu if tok == "mu" else F.Nu)(var, body)
        if tok == "(":
            self.take()
            inner = self.parse_formula()
            self.expect(")")
            return inner
        return self.parse_atom()

    def _action_spec(self, closer):
        if self.peek() == ".":
            self.take()
            self.expect(closer)
            return F.DOT
        complement = False
        if self.peek() == "~":
            self.take()
            complement = True
        labels = []
        while self.peek() != closer:
            tok = self.take()
            if tok not in self.sig.rule_labels:
                raise UnknownRuleLabel(f"{tok!r} is not a rule label")
            labels.append(tok)
        self.take()
        if not labels:
            raise SpecSyntaxError("empty action list in modality")
        return F.Complement(tuple(labels)) if complement else F.Labels(tuple(labels))

    def parse_atom(self):
        tok = self.peek()
        if tok == "True":
            self.take()
            return F.TRUE
        if tok == "False":
            self.take()
            return F.FALSE
        if tok in _FORMULA_RESERVED:
            raise SpecSyntaxError(f"unexpected token {tok!r} in formula")
        if self.peek(1) == "(":
            # parameterized proposition: consume the balanced span
            start = self.pos
            self.take()
            depth = 0
            while True:
                t = self.take()
                if t == "(":
                    depth += 1
                elif t == ")":
                    depth -= 1
                    if depth == 0:
                        break
            return self._prop(self.toks[start:self.pos])
        self.take()
        decls = self.sig.ops.get(tok)
        if decls and any(not d.arg_sorts for d in decls):
            return self._prop([tok])
        if tok[:1].isupper():
            return F.MuVar(tok)
        raise SpecSyntaxError(f"unknown proposition {tok!r}")

    def _prop(self, tokens):
        term = parse_term(tokens, self.sig, {})
        from .terms import PROP_SORT
        if not self.sig.leq(term.sort, PROP_SORT):
            raise SortCheckError(
                f"formula atom {' '.join(tokens)!r} has sort {term.sort}, not Prop")
        return F.Atom(term)
