"""Exception and warning types shared across the package."""


class MagspecError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MagspecError, ValueError):
    """Bad input that violates an operation's precondition."""


class ChartDomainError(MagspecError):
    """Point lies outside the chart's domain."""


class DegenerateMetricError(MagspecError):
    """Metric is numerically degenerate at the requested point."""


class KindMismatchError(MagspecError):
    """Field kind or chart dimension incompatible with the operator."""


class NotHyperbolicError(MagspecError):
    """Group element with |trace| <= 2 where a hyperbolic element is required."""


class IncompleteEnumerationError(MagspecError):
    """Word-length budget exhausted before the requested cutoff was certified.

    Carries ``achieved_radius``: the length below which the enumeration is
    believed complete.
    """

    def __init__(self, message, achieved_radius):
        super().__init__(message)
        self.achieved_radius = achieved_radius


class DegenerateOrbitError(MagspecError):
    """Zero Poincare determinant; the trace invariant is undefined."""


class NotClosedOrbitError(MagspecError):
    """Operation requires a closed orbit."""


class FlowTruncationError(MagspecError):
    """Flow integration left the chart; carries the partial orbit."""

    def __init__(self, message, orbit):
        super().__init__(message)
        self.orbit = orbit


class TransportViolationError(MagspecError):
    """The pair (u, f) does not satisfy the transport equation.

    Carries ``violation``: the measured sup-norm of Hu + i f u.
    """

    def __init__(self, message, violation):
        super().__init__(message)
        self.violation = violation


class MissingRepresentativeError(MagspecError):
    """Closed geodesic has no usable curve representative."""


class ConditioningError(MagspecError):
    """Ill-conditioned input data (metric jets, quadrature weights)."""


class StructureViolationError(MagspecError):
    """Fiber-parity decomposition residual exceeds tolerance."""


class ResonanceError(MagspecError):
    """Interior Dirichlet eigenvalue hit; the DN value is undefined."""


class UnderResolvedWarning(UserWarning):
    """Cutoff or resolution too small to represent the supplied coefficients."""


class NearParabolicWarning(UserWarning):
    """Group element is numerically close to parabolic."""


class DegenerateLimitWarning(UserWarning):
    """Quantity approaches a degenerate limit (e.g. vanishing orbit length)."""
