"""Exception hierarchy shared by the solvers."""


class StochMatherError(Exception):
    """Base class for all solver failures."""


class ModelError(StochMatherError, ValueError):
    """Malformed or inconsistent model definition."""


class ArgmaxOnBoundary(StochMatherError):
    """The velocity box truncates the Legendre transform; enlarge v_max."""


class SingularPolicySystem(StochMatherError):
    """A policy-evaluation system lost its M-matrix structure."""


class NoConvergence(StochMatherError):
    """An iterative method hit its iteration cap."""


class SigmaZeroUnsupported(StochMatherError):
    """The degenerate sigma = 0 problem is not handled by this solver."""


class NonPositiveEigenfunction(StochMatherError):
    """The computed principal eigenvector changed sign."""


class NonzeroMomentum(StochMatherError):
    """The explicit invariant density is a probability density only for P = 0."""


class SingularBeyondNullity(StochMatherError):
    """The adjoint generator has a null space of dimension > 1."""


class NegativeDensity(StochMatherError):
    """The stationary density has negative entries beyond round-off."""


class VelocityBoxTooSmall(StochMatherError):
    """The LP velocity box does not cover the optimal drift with margin."""


class Infeasible(StochMatherError):
    """Phase one of the simplex method found no feasible point."""


class PivotLimit(StochMatherError):
    """The simplex method exceeded its pivot budget."""


class StepTooLarge(StochMatherError):
    """The time step violates the drift CFL bound."""
