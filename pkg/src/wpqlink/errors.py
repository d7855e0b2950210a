"""Exception hierarchy shared by all wpqlink modules."""


class WpqError(Exception):
    """Base class for library errors."""


class DomainError(WpqError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionMismatch(WpqError, ValueError):
    """Operators or states of incompatible dimension were combined."""


class TruncationError(WpqError):
    """The Fock cutoff is too small for the requested state.

    ``deficit`` holds the probability mass lost above the cutoff.
    """

    def __init__(self, message, deficit=None):
        super().__init__(message)
        self.deficit = deficit


class ConvergenceError(WpqError):
    """A numerical routine failed to reach its tolerance.

    When raised by the POVM solver, ``report`` carries the last iterate.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BackendMismatch(WpqError, ValueError):
    """The chosen error-probability backend does not apply to the configuration."""


class BracketError(WpqError):
    """Golden-section refinement found the objective not unimodal on the bracket."""
