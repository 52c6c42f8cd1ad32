"""Exception hierarchy shared by all engine components."""


class StratmcError(Exception):
    """Base class for all errors raised by this package."""


class SpecSyntaxError(StratmcError):
    """Malformed input text; carries the position and what was expected."""

    def __init__(self, message, line=None, column=None, expected=None):
        self.line = line
        self.column = column
        self.expected = tuple(expected) if expected else ()
        where = f" at line {line}" if line is not None else ""
        where += f", column {column}" if column is not None else ""
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message}{where}{hint}")


class AmbiguousParse(SpecSyntaxError):
    """A term admits more than one sort-valid reading."""

    def __init__(self, text, candidates):
        self.candidates = list(candidates)
        listing = "; ".join(self.candidates)
        super().__init__(f"ambiguous term {text!r}: {listing}")


class DuplicateDeclaration(StratmcError):
    """The same name was declared twice where it must be unique."""


class UnknownModule(StratmcError):
    """An import or a module lookup referenced an undeclared module."""


class SortCheckError(StratmcError):
    """A statement is ill-sorted under the declared signature."""


class IllFormed(StratmcError):
    """A term is not well formed where a ground, well-sorted one is required."""


class UnknownRuleLabel(StratmcError):
    """A strategy or formula referenced a rule label that does not exist."""


class UnknownStrategy(StratmcError):
    """A strategy expression called a name that was never declared."""


class UnsupportedFeature(StratmcError):
    """The construct is recognized but deliberately outside this engine."""


class UnboundMuVariable(StratmcError):
    """A fixpoint variable occurs outside the scope of its binder."""


class NonMonotoneFixpoint(StratmcError):
    """A fixpoint variable occurs under an odd number of negations."""


class NonTermination(StratmcError):
    """A reduction or sub-derivation exceeded its step budget."""


class StateBudgetExceeded(StratmcError):
    """Graph construction touched more states than the configured budget."""


class EmptyBehavior(StratmcError):
    """The strategy allows no execution at all from the initial term."""
