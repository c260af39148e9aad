"""Exception types shared across the engine."""


class DynsplatError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(DynsplatError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateRotationError(DynsplatError):
    """A blended quaternion collapsed to (numerically) zero."""


class IndexInvalidationError(DynsplatError):
    """A neighbor index is stale with respect to its control-point set."""


class ConstraintError(DynsplatError):
    """A deformation solve is under-constrained (names the offending vertex)."""


class UnsupportedVersionError(DynsplatError):
    """Archive version is newer than this build understands."""


class CorruptArchiveError(DynsplatError):
    """Archive file is truncated or structurally invalid."""


class OptimError(DynsplatError):
    """Optimizer encountered a non-finite gradient (names the parameter group)."""


class TrainAbort(DynsplatError):
    """Training aborted on a non-finite loss; carries the last good snapshot path."""

    def __init__(self, message: str, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path
