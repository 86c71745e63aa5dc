"""Exception types shared across the package."""


class ManipureError(Exception):
    """Base class for all package errors."""


class FormatError(ManipureError):
    """Raw tensor file is malformed (bad magic, truncated, bad dims)."""


class DecodeError(ManipureError):
    """PNG payload could not be decoded."""


class UnsupportedError(ManipureError):
    """Input is well formed but outside the supported envelope."""


class ConfigError(ManipureError):
    """Invalid configuration value. ``path`` points at the offending field."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NumericalError(ManipureError):
    """Numerical contract violated (non-finite values, asymmetry residue)."""


class AsymmetryError(NumericalError):
    """Inverse transform produced an imaginary residue above tolerance."""


class DegenerateWeightsError(ManipureError):
    """Weight field collapsed to zero and cannot be normalized."""


class TrainingError(ManipureError):
    """Classifier training diverged."""


class MissingPrerequisiteError(ManipureError):
    """A required artifact is absent; names the command that produces it."""
