"""Exception types shared across the package."""


class SpikeflagError(Exception):
    """Base class for all package errors."""


class DataValidationError(SpikeflagError):
    """Input data violates an invariant (non-finite values, shape mismatch...)."""


class FormatError(SpikeflagError):
    """A file on disk does not follow the expected on-disk format."""


class GenerationError(SpikeflagError):
    """Synthetic data generation could not satisfy its constraints."""


class ConfigError(SpikeflagError):
    """A configuration value is out of range or inconsistent."""


class NonFiniteStateError(DataValidationError):
    """Membrane potentials overflowed to NaN/Inf during a forward pass."""


class ConsistencyError(SpikeflagError):
    """Tiles passed to stitch overlap or leave holes."""


class UndefinedMetricError(SpikeflagError):
    """The requested metric is undefined for the given labels."""


class TrainingDivergedError(SpikeflagError):
    """Training produced a non-finite loss; carries epoch/batch/lr diagnostics."""

    def __init__(self, epoch, batch, lr):
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}, lr {lr:g}"
        )


class SearchError(SpikeflagError):
    """Hyperparameter search or repeat evaluation could not complete."""
