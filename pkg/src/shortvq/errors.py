"""Shared exception taxonomy, mapped to CLI exit codes in cli.py."""


class ShortvqError(Exception):
    """Base class for all package errors."""


class ConfigError(ShortvqError):
    """Invalid or unresolvable configuration."""


class ManifestError(ShortvqError):
    """Manifest validation failed; carries one line per violating row."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("manifest validation failed:\n" + "\n".join(self.violations))


class ScoreRangeError(ShortvqError):
    """Score or normalization bound outside its declared range."""


class BackendError(ShortvqError):
    """Base for inference backend failures."""


class BackendTransportError(BackendError):
    """Could not obtain an HTTP-level response after retries."""


class BackendProtocolError(BackendError):
    """Backend answered, but the payload violates the wire contract."""


class AggregationError(ShortvqError):
    """A video has no kept trials to average."""


class InsufficientTrialsError(ShortvqError):
    """Trial cache too small for a requested resample size."""


class DegenerateMetricError(ShortvqError):
    """Correlation undefined (constant input / zero variance)."""


class TensorFormatError(ShortvqError):
    """Malformed VQEF embedding or VQGM checkpoint file."""


class DimensionMismatchError(ShortvqError):
    """Feature / parameter shapes disagree."""
