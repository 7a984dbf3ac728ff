"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class UndefinedAggregation(ArithmeticError):
    """An aggregation rule evaluates to 0/0 on the given prediction pair."""

    def __init__(self, x1, x2, detail=""):
        self.x1 = x1
        self.x2 = x2
        msg = f"cannot aggregate predictions ({x1!r}, {x2!r})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SpecParseError(ValueError):
    """Malformed aggregator spec string."""

    def __init__(self, text, position, reason):
        self.text = text
        self.position = position
        self.reason = reason
        super().__init__(f"{reason} at position {position} in {text!r}")


class SpecRangeError(ValueError):
    """Aggregator parameter outside its admissible range."""


class DatasetError(ValueError):
    """A row of a prediction dataset failed validation."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ExcludedCaseError(ValueError):
    """The record's case is excluded from this analysis (prior of one half)."""


class InsufficientDataError(ValueError):
    """Too few usable observations for an estimate."""


class MuMismatchError(ValueError):
    """Two cases with different priors cannot be combined."""
