"""Exception hierarchy.

Two families matter for the CLI exit code: ``SpecError`` (bad inputs or
configurations, exit 1) and ``NumericalError`` (a solver or quadrature did
not converge, exit 2).
"""


class BlochspecError(Exception):
    """Base class for all package errors."""


class SpecError(BlochspecError):
    """Invalid input data, configuration or planning request."""


class NumericalError(BlochspecError):
    """A numerical procedure failed to reach its tolerance."""


class MalformedSpec(SpecError):
    """Operator description is structurally inconsistent."""


class DegenerateMeanMatrix(SpecError):
    """The mean of the leading perturbing coefficient has a repeated eigenvalue."""


class TruncationTooSmall(SpecError):
    """Fourier truncation would clip coefficient couplings asymmetrically."""


class OverlappingWindows(SpecError):
    """Requested excision windows around singular quasimomenta overlap."""


class EpsilonTooLarge(SpecError):
    """Excision half-width violates epsilon * count < h."""


class WindowContaminated(SpecError):
    """A classification window contains an unrelated degeneracy."""


class ZeroFunction(SpecError):
    """An operation that normalises by the input norm received the zero function."""


class EigensolveFailure(NumericalError):
    """Dense eigendecomposition did not converge."""


class IntegratorFailure(NumericalError):
    """The initial-value integrator could not meet its tolerance."""


class NoConvergence(NumericalError):
    """Newton/secant iteration ran out of steps."""


class MultiplicityUnstable(NumericalError):
    """Eigenvalue count changed between the two counting radii."""


class AmbiguousMatching(NumericalError):
    """Band continuation between two grid nodes is not well separated."""


class NotCauchy(NumericalError):
    """A principal-value stage sequence failed the Cauchy criterion."""
