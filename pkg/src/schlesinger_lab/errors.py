"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`SchlesingerLabError`.  The CLI maps :class:`ConfigInvalid` to exit
code 2 and every other subclass to exit code 3.
"""

from __future__ import annotations


class SchlesingerLabError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(SchlesingerLabError, ValueError):
    """Experiment configuration failed validation.

    ``pointer`` is a JSON pointer to the offending location, e.g. ``/residues``.
    """

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class NumericalError(SchlesingerLabError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class ZeroBase(NumericalError):
    """A power t**B or log t was requested at t = 0."""


class SingularMatrix(NumericalError):
    """Matrix determinant is zero to within tolerance."""


class StepUnderflow(NumericalError):
    """Adaptive step collapsed; usually a singularity on or near the path."""

    def __init__(self, message: str, z: complex | None = None, history=()):
        self.z = z
        self.history = tuple(history)
        super().__init__(message)


class MaxStepsExceeded(NumericalError):
    """Integrator used up its step budget."""


class RadiusTooLarge(SchlesingerLabError, ValueError):
    """Loop radius violates the clearance condition around other points."""


class OnDivisor(NumericalError):
    """Two poles collide (configuration on the divisor a_i = a_j)."""


class ProductDefect(NumericalError):
    """Ordered product of monodromy generators is not the identity."""


class CondBViolated(SchlesingerLabError, ValueError):
    """|Re(l1 - l2)| >= 1 for the eigenvalues of the residue at infinity."""


class IllConditioned(NumericalError):
    """Least-squares basis is numerically rank deficient."""


class InsufficientSamples(SchlesingerLabError, ValueError):
    """Too few samples for the requested truncation order."""


class OutOfSector(SchlesingerLabError, ValueError):
    """Point lies outside the declared sector."""


class DenominatorVanishes(NumericalError):
    """Denominator of the Painleve VI ratio formula is (numerically) zero."""


class SingularPoint(NumericalError):
    """Painleve VI right-hand side evaluated on a singular locus.

    ``factor`` names the vanishing factor: one of ``"w"``, ``"w-1"``,
    ``"w-t"``, ``"t"``, ``"t-1"``.
    """

    def __init__(self, factor: str):
        self.factor = factor
        super().__init__(f"Painleve VI singular: {factor} = 0")


class MovablePole(NumericalError):
    """Direct Painleve VI integration ran into a movable singularity."""

    def __init__(self, message: str, location: complex | None = None, last_t: complex | None = None):
        self.location = location
        self.last_t = last_t
        super().__init__(message)
