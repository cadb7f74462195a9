"""Stability-constrained estimation: estimators, stability certification, bounds and risk."""

from .core import (
    SCHEMA_VERSION,
    BinaryPM,
    Dataset,
    Discrete,
    Estimator,
    HeavyTwoPoint,
    Regression,
    SparseMean,
    StableEstError,
    drop_point,
    replace_point,
    sample,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "SCHEMA_VERSION",
    "BinaryPM",
    "Dataset",
    "Discrete",
    "Estimator",
    "HeavyTwoPoint",
    "Regression",
    "SparseMean",
    "StableEstError",
    "drop_point",
    "replace_point",
    "sample",
]
