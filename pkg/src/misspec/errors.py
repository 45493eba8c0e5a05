"""Exception hierarchy for the misspec package.

Validation problems (bad inputs, invalid models, improper priors) derive from
:class:`InputError`; breakdowns of the numerics themselves (quadrature failure,
internal inconsistencies) derive from :class:`NumericalError`.  The CLI maps
the former to exit code 1 and the latter to exit code 2.
"""


class MisspecError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MisspecError, ValueError):
    """Invalid argument values, shapes, or dimensions."""


class ModelValidationError(InputError):
    """A model instance violates one of its invariants (SPD weight, rank)."""


class DomainError(InputError):
    """Argument outside the mathematical domain of a special function."""


class ImproperPriorError(InputError):
    """Operation requires a proper (normalizable) radial prior."""


class DegenerateLimitError(InputError):
    """A closed-form limit posterior is undefined (requires a positive J)."""


class JustIdentifiedError(InputError):
    """Confidence interval requested for a just-identified model (k = p)."""


class GridError(InputError):
    """A posterior grid cannot be constructed or does not cover the optimum."""


class ResampleRequiredError(InputError):
    """A simulated sample is degenerate (rank-deficient moments); redraw."""


class NumericalError(MisspecError):
    """A numerical routine failed to converge or produced inconsistent output."""
