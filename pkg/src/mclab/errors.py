"""Exception types shared across the package."""


class MclabError(Exception):
    """Base class for all package errors."""


class UnrecognizedModeError(MclabError):
    """A survey mode code that is not in the recognized code space."""

    def __init__(self, code: str):
        super().__init__(f"unrecognized survey mode code: {code!r}")
        self.code = code


class ConsistencyError(MclabError):
    """Cross-entity invariant violated (e.g. trip not in the given tour)."""


class SchemaError(MclabError):
    """Input file header does not match the expected schema."""


class FeedError(MclabError):
    """Transit feed is missing required files or violates feed invariants."""


class ConfigError(MclabError):
    """Configuration value missing, malformed, or pointing nowhere."""


class DataError(MclabError):
    """A variable required by the utility specification is missing."""


class NumericalError(MclabError):
    """Non-finite value encountered during likelihood evaluation."""


class DomainError(MclabError):
    """Argument outside the mathematical domain of the function."""


class IdentificationError(MclabError):
    """Model parameters cannot be identified from the data."""

    def __init__(self, parameters, message: str = ""):
        names = ", ".join(parameters)
        detail = f" ({message})" if message else ""
        super().__init__(f"non-identifiable parameters: {names}{detail}")
        self.parameters = list(parameters)


class NotConvergedError(MclabError):
    """Optimizer hit the iteration cap; carries the log-likelihood trail."""

    def __init__(self, iterations: int, trajectory):
        super().__init__(f"no convergence after {iterations} iterations")
        self.iterations = iterations
        self.trajectory = list(trajectory)


class DegenerateChoiceSetError(MclabError):
    """Every alternative was removed; carries the constraint log."""

    def __init__(self, trip_id, constraint_log):
        super().__init__(f"all alternatives removed for trip {trip_id}")
        self.trip_id = trip_id
        self.constraint_log = list(constraint_log)


class StageError(MclabError):
    """A pipeline command is missing an artifact from an earlier stage."""
