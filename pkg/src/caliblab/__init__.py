"""caliblab: a desk-scale laboratory for studying the limits of temperature
scaling on class-overlapping data, against mixed-label training objectives
and their closed-form optimal predictor."""

__version__ = "0.1.0"

from . import calibration, config, datasets, experiments, mixing, network, training

__all__ = [
    "__version__",
    "calibration",
    "config",
    "datasets",
    "experiments",
    "mixing",
    "network",
    "training",
]
