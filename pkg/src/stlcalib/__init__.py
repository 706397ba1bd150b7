"""Temporal-logic confidence scoring and calibration for stepwise reasoning traces."""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    DatasetError,
    EvaluationError,
    FormulaSyntaxError,
    ParameterError,
    StlCalibError,
)
from .traces import ConfidenceTrace, Dataset, SynthConfig, parse_dataset, serialize_dataset, split_dataset, synthesize
from .reshape import ReshapeParams, apply, cms, eds, gs, mps
from .stl import parse_formula, pretty, robustness, score, stl1, stl2, stl3
from .calibration import brier, ece
from .tuning import GridSpec, evaluate_config, grid_search
