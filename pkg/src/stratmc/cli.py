"""Command-line front-end: check, graph, srewrite."""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import formulas as F
from .errors import EmptyBehavior, StratmcError
from .kripke import (
    STUTTER, BuildOptions, build_controlled, build_uncontrolled, to_dot,
    DEFAULT_GRAPH_BUDGET,
)
from .ltl import check_ctl, check_ctl_star, check_ltl, render_counterexample
from .mucalc import check_mu_with_stats
from .parsing import parse_formula, parse_spec, parse_strategy, parse_term, resolve_module
from .semantics import srewrite
from .terms import PROP_SORT, pretty

BUDGET_ENV = "STRATMC_BUDGET"


def _default_budget():
    value = os.environ.get(BUDGET_ENV)
    if value and value.isdigit():
        return int(value)
    return DEFAULT_GRAPH_BUDGET


def _build_cli():
    top = argparse.ArgumentParser(
        prog="stratmc",
        description="Model checker for strategy-controlled rewrite systems")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, with_adaptations=True):
        p.add_argument("file", help="specification file")
        p.add_argument("term", help="initial term")
        p.add_argument("--module", help="module name (default: last in file)")
        p.add_argument("--budget", type=int, default=None,
                       help=f"state budget (default from ${BUDGET_ENV} or "
                            f"{DEFAULT_GRAPH_BUDGET})")
        if with_adaptations:
            p.add_argument("--purge-fails", choices=["auto", "yes", "no"],
                           default="auto")
            p.add_argument("--merge-states",
                           choices=["auto", "no", "state", "edge"], default="auto")

    check = sub.add_parser("check", help="model check a temporal formula")
    common(check)
    check.add_argument("formula", help="temporal formula")
    check.add_argument("strategy", nargs="?", default=None,
                       help="strategy name or expression")
    check.add_argument("--counterexample", "-c", action="store_true",
                       help="print a counterexample when available")
    check.add_argument("--format", choices=["text", "json"], default="text")
    # argparse would otherwise put the formula before the term
    graph = sub.add_parser("graph", help="print the state graph in DOT format")
    common(graph)
    graph.add_argument("strategy", nargs="?", default=None)

    srew = sub.add_parser("srewrite", help="strategic rewriting results")
    common(srew, with_adaptations=False)
    srew.add_argument("strategy")
    srew.add_argument("--max", type=int, default=None, help="maximum solutions shown")
    return top


_AUTO = {
    F.LogicClass.PROP: (False, "no"),
    F.LogicClass.LTL: (False, "no"),
    F.LogicClass.CTL: (True, "state"),
    F.LogicClass.CTLSTAR: (True, "state"),
    F.LogicClass.MUCALC: (True, "edge"),
}


def _options(args, logic):
    purge, merge = _AUTO[logic]
    if args.purge_fails != "auto":
        purge = args.purge_fails == "yes"
    if args.merge_states != "auto":
        merge = args.merge_states
    return BuildOptions(purge_fails=purge, merge_states=merge)


def _load(args):
    with open(args.file, encoding="utf-8") as fh:
        spec = parse_spec(fh.read())
    module = resolve_module(spec, args.module)
    term = parse_term(args.term, module.signature)
    strategy = None
    if args.strategy is not None:
        strategy = parse_strategy(args.strategy, module)
    return module, term, strategy


def _budget(args):
    return args.budget if args.budget is not None else _default_budget()


def _cmd_check(args):
    module, term, strategy = _load(args)
    formula, logic = parse_formula(args.formula, module)
    options = _options(args, logic)
    budget = _budget(args)

    vacuous = False
    if strategy is None:
        graph = build_uncontrolled(module.signature, term, budget)
    else:
        try:
            graph = build_controlled(module, term, strategy, options, budget)
        except EmptyBehavior:
            if logic in (F.LogicClass.PROP, F.LogicClass.LTL):
                print("warning: the strategy allows no execution; "
                      "the property is vacuously satisfied", file=sys.stderr)
                vacuous = True
                graph = None
            else:
                raise

    lasso = None
    game_states = None
    if vacuous:
        satisfied = True
        states = 0
    else:
        states = len(graph)
        if logic in (F.LogicClass.PROP, F.LogicClass.LTL):
            satisfied, lasso = check_ltl(graph, formula)
        elif logic is F.LogicClass.CTL:
            satisfied = check_ctl(graph, formula)
        elif logic is F.LogicClass.CTLSTAR:
            satisfied = check_ctl_star(graph, formula)
        else:
            satisfied, game_states = check_mu_with_stats(graph, formula)

    if args.format == "json":
        payload = {"satisfied": satisfied, "states": states}
        if game_states is not None:
            payload["gameStates"] = game_states
        if lasso is not None and args.counterexample:
            payload["counterexample"] = {
                "prefix": [[pretty(t), _action(a)] for t, a in lasso.prefix],
                "cycle": [[pretty(t), _action(a)] for t, a in lasso.cycle],
            }
        print(json.dumps(payload))
    else:
        verdict = "satisfied" if satisfied else "not satisfied"
        stats = f"{states} system states"
        if game_states is not None:
            stats += f", {game_states} game states"
        print(f"The property is {verdict} in the initial state ({stats})")
        if lasso is not None and args.counterexample:
            print(render_counterexample(lasso))
    return 0 if satisfied else 1


def _action(a):
    return "deadlock" if a == STUTTER else a


def _cmd_graph(args):
    module, term, strategy = _load(args)
    purge = args.purge_fails == "yes"
    merge = args.merge_states if args.merge_states != "auto" else "no"
    budget = _budget(args)
    if strategy is None:
        graph = build_uncontrolled(module.signature, term, budget)
    else:
        graph = build_controlled(module, term, strategy,
                                 BuildOptions(purge, merge), budget)
    props = [
        decl_term for decl_term in _prop_constants(module.signature)
    ]
    print(to_dot(graph, props))
    return 0


def _prop_constants(sig):
    from .terms import make_term
    out = []
    for name, decls in sorted(sig.ops.items()):
        for d in decls:
            if not d.arg_sorts and sig.leq(d.result_sort, PROP_SORT):
                out.append(make_term(sig, name, ()))
                break
    return out


def _cmd_srewrite(args):
    module, term, strategy = _load(args)
    if strategy is None:
        raise StratmcError("srewrite needs a strategy")
    results = srewrite(module, term, strategy, _budget(args))
    shown = results if args.max is None else results[:args.max]
    for k, result in enumerate(shown, start=1):
        print(f"Solution {k}")
        print(f"result {result.sort}: {pretty(result)}")
        print()
    print("No more solutions.")
    return 0


def main(argv=None):
    args = _build_cli().parse_args(argv)
    try:
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "graph":
            return _cmd_graph(args)
        return _cmd_srewrite(args)
    except StratmcError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
