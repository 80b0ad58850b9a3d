"""Exception types raised by the toolkit."""


class PerihomError(Exception):
    """Base class for all toolkit errors."""


class DegenerateBasis(PerihomError):
    """Lattice basis vectors are (numerically) linearly dependent."""


class Incommensurable(PerihomError):
    """Requested scale 1/K does not map torus nodes onto exact cell nodes."""


class SingularPoint(PerihomError):
    """A pointwise matrix value is numerically singular."""


class RankDeficient(PerihomError):
    """First-order symbol loses rank on the unit sphere."""


class NotPositive(PerihomError):
    """Coefficient fails a positive-definiteness precheck."""


class NotHermitian(PerihomError):
    """Assembled object violates Hermiticity beyond tolerance."""


class NonzeroMean(PerihomError):
    """A field required to have zero cell mean does not."""


class SignFlip(PerihomError):
    """Converged ground state changes sign on the grid."""


class ModeSingular(PerihomError):
    """A per-mode matrix of the effective resolvent is ill-conditioned."""


class InadmissibleZeta(PerihomError):
    """Spectral parameter lies on the forbidden half-line."""


class SolverDiverged(PerihomError):
    """Krylov iteration stagnated above the requested residual."""


class NoConvergence(PerihomError):
    """Randomized norm estimate kept oscillating past the iteration cap."""


class InsufficientPoints(PerihomError):
    """Not enough surviving sweep points to fit a rate."""


class OutOfRange(PerihomError):
    """Argument outside the domain of a closed-form factor."""
