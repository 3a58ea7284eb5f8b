"""Exception types shared across the package."""


class GazeCtxError(Exception):
    """Base class for all package errors."""


class DomainError(GazeCtxError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateInputError(DomainError):
    """Input geometry is too small to define the requested quantity."""


class DegenerateProjectionError(DomainError):
    """The camera sits inside (or straddles) the object being projected."""


class FormatError(GazeCtxError, ValueError):
    """A recording or results file could not be parsed.

    ``line`` is 1-based when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ValidationError(GazeCtxError, ValueError):
    """A recording violates one or more data-model invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            shown += f"; ... {more} more"
        super().__init__(f"{len(self.violations)} violation(s): {shown}")


class ConfigError(GazeCtxError, ValueError):
    """A configuration value is invalid."""


class PlacementError(GazeCtxError):
    """The synthetic scene could not be placed within the retry budget."""


class PreconditionError(GazeCtxError, ValueError):
    """A strategy was asked to answer without the context it needs."""


class SweepError(GazeCtxError):
    """Every trial failed in transport at some context length."""

    def __init__(self, k: int, message: str | None = None):
        self.k = k
        super().__init__(message or f"all trials transport-failed at k={k}")


class AbsentObservationError(GazeCtxError, KeyError):
    """The object is not observed in the requested frame."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UsageError(GazeCtxError, ValueError):
    """A caller asked for an option that does not exist."""
