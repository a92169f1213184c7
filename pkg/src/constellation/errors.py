"""Exception hierarchy shared by the constellation package."""


class ConstellationError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(ConstellationError, ValueError):
    """A catalog file lacks a required column."""

    def __init__(self, column: str, path: str | None = None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")


class ParseError(ConstellationError, ValueError):
    """A catalog cell could not be parsed as a finite number."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}: column {column!r} has non-numeric value {value!r}")


class IntegrityError(ConstellationError, ValueError):
    """Catalog-level invariant violated (e.g. duplicate ids)."""


class GenerationError(ConstellationError, ValueError):
    """Synthetic data could not be generated with the given arguments."""


class ContractError(ConstellationError, ValueError):
    """Arguments violate an operation's preconditions."""


class OracleCapError(ConstellationError, ValueError):
    """Brute-force oracle refused an input larger than its cap."""
