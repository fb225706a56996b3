"""Exception types shared across the package."""


class DimosrError(Exception):
    """Base class for all package errors."""


class ShapeError(DimosrError, ValueError):
    """Tensor shapes violate an operation's contract."""


class ConfigError(DimosrError, ValueError):
    """Invalid model/training/run configuration."""


class ContractError(DimosrError, ValueError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class CheckpointError(DimosrError, ValueError):
    """Checkpoint file is malformed, truncated, or inconsistent."""


class ImageFormatError(DimosrError, ValueError):
    """Unsupported on-disk image format."""


class TrainingDiverged(DimosrError, RuntimeError):
    """Training loss became non-finite; carries diagnostic context."""

    def __init__(self, iteration, lr, batch_ids, loss_value):
        self.iteration = iteration
        self.lr = lr
        self.batch_ids = list(batch_ids)
        self.loss_value = loss_value
        super().__init__(
            f"non-finite loss {loss_value!r} at iteration {iteration} "
            f"(lr={lr:.3e}, batch={self.batch_ids})"
        )
