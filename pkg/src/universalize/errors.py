"""Exception hierarchy shared across the package."""


class UniversalizeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(UniversalizeError):
    """Problems with market data (file contents, missing files)."""


class MarginBreach(DataError):
    """A daily price factor reached ``1 + alpha`` so a short position would be wiped out."""

    def __init__(self, x, alpha, day=None):
        self.x = x
        self.alpha = alpha
        self.day = day
        where = "" if day is None else f" on day {day}"
        super().__init__(f"price factor {x!r}{where} breaches margin: x >= 1 + alpha = {1 + alpha!r}")


class InsufficientHistory(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        prefix = f"[{', '.join(loc)}] " if loc else ""
        super().__init__(prefix + message)


class NonPositivePrice(DataError):
    def __init__(self, value, row=None, column=None):
        self.value = value
        self.row = row
        self.column = column
        super().__init__(f"non-positive price {value!r} at row {row}, column {column!r}")


class DimensionMismatch(UniversalizeError, ValueError):
    pass


class LengthMismatch(UniversalizeError, ValueError):
    pass


class PartitionError(UniversalizeError, ValueError):
    pass


class BudgetTooSmall(UniversalizeError, ValueError):
    pass


class GridTooLarge(UniversalizeError, ValueError):
    pass


class ConfigError(UniversalizeError):
    pass
