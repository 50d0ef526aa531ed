"""Exception types shared across the toolkit."""


class MaxRegError(Exception):
    """Base class for all toolkit errors."""


class ImproperSplitError(MaxRegError):
    """The normal polynomial does not split into m stable and m unstable roots."""

    def __init__(self, message, n_plus=None, n_real=None):
        super().__init__(message)
        self.n_plus = n_plus
        self.n_real = n_real


class ContourGeometryError(MaxRegError):
    """No admissible contour separates the stable roots from the rest."""


class NumericalAccuracyError(MaxRegError):
    """A numerical self-check failed; ``residual`` holds the achieved value."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NoLocalSolutionError(MaxRegError):
    """The contraction iteration did not contract down to the minimal interval."""


class ConfigError(MaxRegError):
    """Malformed or inconsistent problem configuration."""


class ParabolicityError(MaxRegError):
    """An operator or coefficient field fails the parabolicity requirement."""
