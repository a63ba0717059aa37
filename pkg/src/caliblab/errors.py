"""Shared exception types.

Every error raised by the core modules derives from CalibLabError so that the
service layer can map domain failures to HTTP 400s without a catalogue of
special cases.
"""


class CalibLabError(Exception):
    """Base class for all caliblab domain errors."""


class ParameterError(CalibLabError, ValueError):
    """A spec, config value, or argument is out of its legal range."""


class OutOfSupportError(CalibLabError):
    """A query point lies outside the support of the data distribution."""


class NoisePlanError(CalibLabError):
    """A label-noise plan does not cover the classes present in a dataset."""


class InsufficientDataError(CalibLabError):
    """A dataset is too small for the requested mixing dimension."""


class DegenerateSimplexError(CalibLabError):
    """The vertex-difference matrix of a mixing tuple is singular or the
    barycentric solve failed its residual check."""


class UncoveredPointError(CalibLabError):
    """No admissible mixing tuple covers the query point."""


class TrainingDivergedError(CalibLabError):
    """Training produced a non-finite loss."""


class TemperatureFitError(CalibLabError):
    """The temperature objective was non-finite across the whole bracket."""


class ConfigError(CalibLabError):
    """An experiment config file is malformed or carries unknown keys."""
