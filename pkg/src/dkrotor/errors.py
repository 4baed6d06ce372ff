"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, ValidityError -> 3,
FitConvergenceError -> 4.
"""


class RotorError(Exception):
    """Base class for all package-specific errors."""


class BasisError(RotorError):
    """A wavefunction was supplied in the wrong basis for the operation."""


class ConfigError(RotorError):
    """Config file cannot be parsed or validated.

    Carries the 1-based line number when the problem is tied to a line.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidityError(RotorError):
    """A run or analysis violated a physics-validity guard."""


class TruncationError(ValidityError):
    """Probability leaked into the outer edge of the momentum lattice."""


class TrackingError(ValidityError):
    """Adiabatic state correspondence was lost while following eigenstates."""


class WraparoundError(ValidityError):
    """The inter-sequence phase left (0,1); the fast product path refuses.

    Use evolve_schedule, which handles kick reordering.
    """


class FitConvergenceError(RotorError):
    """A fit failed to converge; carries the best partial result if any."""

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)
