"""stratmc: model checking for strategy-controlled rewrite systems.

The package parses algebraic specifications with a programmable
strategy language, materializes the state spaces induced by the
strategy small-step semantics (with the branching-time adaptations
purge-fails and merge-states), and model checks LTL, CTL, CTL* and
mu-calculus properties with counterexample output.
"""

from .errors import (
    AmbiguousParse, DuplicateDeclaration, EmptyBehavior, IllFormed,
    NonMonotoneFixpoint, NonTermination, SortCheckError, SpecSyntaxError,
    StateBudgetExceeded, StratmcError, UnboundMuVariable, UnknownModule,
    UnknownRuleLabel, UnknownStrategy, UnsupportedFeature,
)
from .formulas import LogicClass, classify
from .kripke import (
    STUTTER, BuildOptions, KripkeGraph, bisimilar, bounded_unwinding,
    build_controlled, build_uncontrolled, to_dot,
)
from .ltl import Lasso, check_ctl, check_ctl_star, check_ltl, ltl_to_buchi, render_counterexample
from .mucalc import build_parity_game, check_mu, to_positive_normal_form, zielonka
from .parsing import (
    load_file, parse_formula, parse_spec, parse_strategy, parse_term,
    resolve_module,
)
from .semantics import (
    Module, cterm, opsem_successors, srewrite, step_successors,
)
from .terms import (
    Signature, Term, apply_subst, eval_condition, eval_prop, match,
    make_term, make_var, normalize, pretty, rule_applications,
)

__version__ = "0.1.0"
