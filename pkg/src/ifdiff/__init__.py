"""Conditional denoising diffusion for UI layout grids, written on numpy."""

from .errors import (CheckpointError, ContractViolation, IfdiffError, IncompatibleError,
                     InvalidConfigError, InvalidDataError, InvalidShapeError, InvalidStepError,
                     NumericFailure, ParseError, VersionMismatchError)
from .numerics import Rng, normal
from .schedule import NoiseSchedule, cosine_schedule, linear_schedule, scale_schedule

__version__ = "0.1.0"
