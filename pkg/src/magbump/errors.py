"""Exception types shared across the package."""


class MagbumpError(Exception):
    """Base class for all package-specific errors."""


class SceneFormatError(MagbumpError):
    """Scene file could not be parsed; message cites the offending field."""


class SingleBump(MagbumpError):
    """Operation needs at least two bumps."""


class CollinearBumps(MagbumpError):
    """Some straight line meets three bumps, so the minimal turning angle is 0."""


class DomainError(MagbumpError, ValueError):
    """Numeric argument outside the documented domain."""


class ZeroField(MagbumpError):
    """Field strength b = 0 where a Larmor quantity is required."""


class InteriorTrapped(MagbumpError):
    """Larmor circle lies entirely inside the bump; no boundary crossing exists."""


class LimitExceeded(MagbumpError):
    """Propagation hit max_events/max_time.  Carries the partial orbit."""

    def __init__(self, message, orbit=None):
        super().__init__(message)
        self.orbit = orbit


class IndeterminateRegime(MagbumpError):
    """Bump is neither weak nor strong; the scattering map may be undefined."""


class GridTooCoarse(MagbumpError):
    """Degree computation could not resolve the winding on the given grid."""


class NotInDomain(MagbumpError):
    """Section state escapes before reaching another bump."""


class GlancingNearby(MagbumpError):
    """Trajectory is within tolerance of tangency; derivative ill-conditioned."""


class Escaped(NotInDomain):
    """Orbit leaves to infinity before the next section crossing."""


class Glancing(MagbumpError):
    """Tangential boundary encounter where a transversal one is required."""


class NoConvergence(MagbumpError):
    """Newton search failed.  Carries the best residual seen."""

    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace or []


class NotVeryStrong(MagbumpError):
    """Scene does not satisfy the very-strong-field inequalities."""


class ExcludedDirection(MagbumpError):
    """Asymptotic direction lies along a line meeting two bumps."""


class ZeroVector(MagbumpError, ValueError):
    """Zero tangent vector has no cone classification."""


class NoEvents(MagbumpError):
    """Orbit has no bump traversal, hence no itinerary."""
