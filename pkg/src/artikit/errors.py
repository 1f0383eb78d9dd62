"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation/parse problems exit 2,
geometric degeneracies exit 3.
"""


class ArtikitError(Exception):
    """Base class for all artikit errors."""


class ValidationError(ArtikitError):
    """Input data violates a documented invariant.

    Carries the list of violation messages in ``violations`` when the
    error originates from model validation.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else []


class ParseError(ValidationError):
    """A file could not be parsed; the message names the offending field."""


class GeometryError(ArtikitError):
    """Numeric or geometric degeneracy (zero-area mesh, out-of-cube point)."""
