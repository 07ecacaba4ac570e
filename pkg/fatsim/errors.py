# fatsim/errors.py
"""
Exception hierarchy shared by every fatsim package.

Everything raised on purpose derives from FatSimError so the CLI can map
failures to exit codes in one place.
"""


class FatSimError(RuntimeError):
    """Base class for all fatsim errors."""


class ShapeError(FatSimError, ValueError):
    """Tensor shapes (or a shape precondition) do not line up."""


class NonFiniteError(FatSimError, FloatingPointError):
    """An op or loss produced NaN or Inf."""


class DescriptorMismatchError(ShapeError):
    """Two ModelParams (or a checkpoint and a config) disagree on architecture."""


class ConfigurationError(FatSimError, ValueError):
    """Invalid federation, dataset or experiment configuration."""


class CheckpointError(FatSimError):
    """Checkpoint or exported dataset file is malformed or fails its hash."""


class InvariantViolation(FatSimError):
    """A run-time invariant check failed."""


class ProbabilityError(FatSimError, ValueError):
    """Input that must be a probability map is not one."""
