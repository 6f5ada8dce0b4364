"""Exception types shared across the library."""


class FoldcontError(Exception):
    """Base class for all library errors."""


class SingularMatrix(FoldcontError):
    """A pivot fell below the singularity threshold during factorization."""


class NotSymmetric(FoldcontError):
    """A symmetric eigensolver was handed a non-symmetric matrix."""


class NoConvergence(FoldcontError):
    """An iterative solver hit its iteration cap before converging."""


class TransversalityFailure(FoldcontError):
    """The image path is not transversal to the fold image at the target point."""


class NoProgress(FoldcontError):
    """Continuation reached the minimum step size with the corrector still failing."""


class OnCriticalBoundary(FoldcontError):
    """A point sits on an orthant boundary where the Morse index is undefined."""


class EmptyDomain(FoldcontError):
    """A discretization produced no active nodes."""


class ConfigError(FoldcontError):
    """An experiment configuration failed validation."""
