"""Exception hierarchy shared by every puac module."""


class PuacError(Exception):
    """Base class for all errors raised by this package."""


class StructuralViolation(PuacError, ValueError):
    """A prior matrix breaks one of the mixture constraints."""


class DegeneratePrior(PuacError, ValueError):
    """A prior that appears as a denominator in the risk rewrite is zero.

    ``theta_u^n == 0`` or ``theta_a^a == 0``. In those limits the problem is
    ordinary PU learning and the three-bag rewrite does not apply.
    """


class ParseError(PuacError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DimensionMismatch(PuacError, ValueError):
    pass


class UnknownSourceTag(ParseError):
    pass


class EmptyClass(PuacError, ValueError):
    pass


class EmptyBag(PuacError, ValueError):
    pass


class MissingClass(PuacError, ValueError):
    pass


class EmptySampleSet(PuacError, ValueError):
    pass


class NonConvergence(PuacError, RuntimeError):
    pass
