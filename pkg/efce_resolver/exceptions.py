"""Exception hierarchy shared by the solver apps."""


class ResolverError(Exception):
    """Base class for every error raised by the resolver packages."""


class GameStructureError(ResolverError):
    """The game tree is malformed (orphan node, duplicate child, cycle, bad infoset)."""

    def __init__(self, message: str, node_id=None):
        super().__init__(message)
        self.node_id = node_id


class GameFormatError(ResolverError):
    """A game file could not be parsed."""

    def __init__(self, message: str, line_number: int = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class InputError(ResolverError, ValueError):
    """Caller supplied an invalid argument or configuration."""


class InvariantViolation(ResolverError):
    """An internal invariant does not hold. Indicates a bug or an invalid decomposition."""


class SolverError(ResolverError):
    """The LP backend did not return an optimal solution."""

    def __init__(self, message: str, status: str = None):
        super().__init__(message)
        self.status = status
