"""Exception hierarchy shared by all blocktri modules."""


class BlocktriError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(BlocktriError):
    """Operands have incompatible block counts or block orders."""


class SingularBlock(BlocktriError):
    """A dense block is singular to working precision."""


class SingularPivot(BlocktriError):
    """A pivot block in a sweep is singular; carries the block-row index."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"singular pivot block at block row {row}")


class OracleTooLarge(BlocktriError):
    """Dense expansion requested beyond the configured oracle cap."""


class IndexOutOfRange(BlocktriError):
    """Block-row index outside the valid range."""


class InvalidRankCount(BlocktriError):
    """Rank count incompatible with the problem (p < 1, p > N, or p < 2 for comm models)."""


class InconsistentRanges(BlocktriError):
    """Superposition factors do not cover the matrix with consistent ranges."""


class DeadlockDetected(BlocktriError):
    """A virtual rank waits on a message that no rank will ever send."""


class StageViolation(BlocktriError):
    """An execution trace violates the dichotomy stage structure."""


class UnlabeledNode(BlocktriError):
    """A mesh node is neither interior to a subdomain nor on the interface."""


class SubdomainSolveFailure(BlocktriError):
    """An interior solve inside the Schur complement failed."""


class Breakdown(BlocktriError):
    """Conjugate-gradient breakdown: loss of positive definiteness detected."""


class BandTooWide(BlocktriError):
    """Requested probing bandwidth does not fit the operator order."""


class BlockTooSmall(BlocktriError):
    """Block order smaller than the band half-width."""


class NotSeparable(BlocktriError):
    """Subdomain does not admit the separation-of-variables fast path."""


class QuadratureFailure(BlocktriError):
    """Source-coefficient quadrature did not reach the documented accuracy."""


class SolverFailure(BlocktriError):
    """A harmonic solve failed; carries the harmonic index."""

    def __init__(self, harmonic, message=None):
        self.harmonic = harmonic
        super().__init__(message or f"solver failure at harmonic {harmonic}")


class ConfigError(BlocktriError):
    """Invalid or unknown configuration keys/values."""


class FileFormatError(BlocktriError):
    """Malformed binary container (bad magic, truncated payload, ...)."""
