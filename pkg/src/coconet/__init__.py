"""Coordinate-to-colour networks: encode one image in the weights of a small dense net."""

from .coords import FEATURE_CONVENTION, featurize, resample_grid, training_grid
from .errors import (
    ChecksumError,
    CocoNetError,
    ConventionError,
    DatasetError,
    FormatError,
    InvalidInputError,
    PayloadLengthError,
    TrainingDivergedError,
    VersionError,
)
from .model import TrainConfig, TrainedModel, complete, denoise, memorize, reconstruct, train, upsample
from .nn_core import NetworkArch, NetworkParams

__version__ = "0.1.0"
