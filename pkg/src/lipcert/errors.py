"""Exception hierarchy shared across the package."""


class LipcertError(Exception):
    """Base class for all library errors."""


class ModelError(LipcertError):
    """Bad model input: malformed manifest, shape mismatch, unknown architecture."""


class SplitError(LipcertError):
    """Invalid split directive (out-of-range cut, unparsable policy)."""


class AssemblyError(LipcertError):
    """A constraint group cannot be mapped to a builder, or the assembled
    problem references undeclared variables."""


class SolveError(LipcertError):
    """Solver backend failed to produce a usable solution."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleError(SolveError):
    """The assembled problem is primal infeasible.  A Lipschitz bound always
    exists for the supported layer types, so this signals an assembly bug or
    an inconsistent variable binding rather than a property of the network."""
