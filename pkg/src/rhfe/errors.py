"""Exception types raised across the package."""


class RhfeError(Exception):
    """Base class for all package-specific errors."""


class NonConvergentRiccati(RhfeError):
    """Fixed-point Riccati iteration failed to reach tolerance within the cap."""


class IndexOutOfRange(RhfeError, IndexError):
    """Fault channel index outside the sensor/actuator range."""


class RankDeficientFaultChannel(RhfeError):
    """First nonzero fault Markov block does not have full column rank."""


class NoNonzeroMarkov(RhfeError):
    """All tested fault Markov blocks are numerically zero."""


class NumericalRankAmbiguity(RhfeError):
    """A rank decision fell inside the tolerance band; refusing to guess."""


class DivergedState(RhfeError):
    """Closed-loop simulation state exceeded the divergence bound."""


class RankDeficientRegressor(RhfeError):
    """Identification data matrix is too ill-conditioned (insufficient excitation)."""


class BlockMisalignment(RhfeError):
    """Internal block-slicing consistency check failed."""


class ShapeMismatch(RhfeError, ValueError):
    """Matrix blocks with inconsistent dimensions."""


class WindowNotFull(RhfeError):
    """Estimation requested before the sliding window has filled."""


class SingularCovariance(RhfeError):
    """A covariance matrix required to be positive definite is singular."""


class InfeasibleFaultConstraint(RhfeError):
    """No nontrivial robust design exists (fault-bias bound cannot go below 1)."""


class SolverFailure(RhfeError):
    """Conic solver did not return an optimal solution."""

    def __init__(self, message, status=None, stats=None):
        super().__init__(message)
        self.status = status
        self.stats = stats


class IndefiniteMiddleMatrix(RhfeError):
    """Quadratic-constraint middle matrix has a significantly negative eigenvalue."""


class UnknownFigure(RhfeError):
    """Requested figure id has no registered data emitter."""


class ArtifactFormatError(RhfeError, ValueError):
    """Persisted artifact (JSON/sidecar) is malformed or of the wrong kind."""
