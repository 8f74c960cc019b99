"""Robust learning of monotone single-index models under Gaussian inputs."""

from .core import (
    Activation,
    BiasedThreshold,
    BoundedSmooth,
    Dataset,
    GeneralReLU,
    Hypothesis,
    PiecewiseLinearMonotone,
    RegularityParams,
    Sample,
    squared_loss,
    truncate_labels,
)

__all__ = [
    "Activation",
    "BiasedThreshold",
    "BoundedSmooth",
    "Dataset",
    "GeneralReLU",
    "Hypothesis",
    "PiecewiseLinearMonotone",
    "RegularityParams",
    "Sample",
    "squared_loss",
    "truncate_labels",
]

__version__ = "0.1.0"
