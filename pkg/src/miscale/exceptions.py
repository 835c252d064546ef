"""Exception hierarchy shared by every module."""

import numpy as np


class MiScaleError(Exception):
    """Base class for errors raised by miscale."""


class InvalidPartitionError(MiScaleError, ValueError):
    """A bipartition request is out of range for the grid."""


class DimensionError(MiScaleError, ValueError):
    """Array shapes do not agree with a grid, partition or model."""


class DominanceError(MiScaleError, ValueError):
    """A coupling value breaks diagonal dominance of a precision family."""


class NotPositiveDefiniteError(MiScaleError, np.linalg.LinAlgError):
    """Cholesky factorisation hit a non-positive pivot."""


class UnsupportedOperationError(MiScaleError, TypeError):
    """The model lacks what the requested operation needs."""


class TrainingDivergedError(MiScaleError, RuntimeError):
    """Classifier training produced a non-finite loss."""


class EstimationFailedError(MiScaleError, RuntimeError):
    """Every trial of an MI estimate failed."""


class FeaturizationError(MiScaleError, ValueError):
    """Values fall outside the range a featurizer accepts."""


class FormatError(MiScaleError, ValueError):
    """A file does not follow the expected on-disk format."""


class ConfigError(MiScaleError, ValueError):
    """An experiment configuration is invalid or incomplete."""
