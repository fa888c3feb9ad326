"""Exception types shared across the package."""


class AmnetError(Exception):
    """Base class for all package errors."""


class ShapeError(AmnetError):
    """Tensor shapes do not conform to an operation's contract."""


class ContractError(AmnetError):
    """A documented precondition or invariant was violated by the caller."""


class ConfigError(AmnetError):
    """Invalid experiment or task configuration."""


class OracleFailure(AmnetError):
    """An independent numerical oracle could not be evaluated."""


class TrainingAborted(AmnetError):
    """Training stopped due to a non-finite loss or similar runtime fault."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class CheckpointError(AmnetError):
    """Checkpoint file is malformed or does not match the current config."""
