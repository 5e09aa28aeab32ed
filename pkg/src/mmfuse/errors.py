"""Exception hierarchy shared across the pipeline."""


class MMFuseError(Exception):
    """Base class for all mmfuse errors."""


class FormatError(MMFuseError):
    """Malformed container or corpus file (bad magic, truncated payload, ...)."""


class ValidationError(MMFuseError):
    """Structurally valid data that violates a semantic invariant (NaN payload, ...)."""


class ArgumentError(MMFuseError, ValueError):
    """Operation called with arguments outside its contract."""


class AlignmentError(MMFuseError):
    """Word timings that cannot be mapped onto the frame axis."""


class ConfigError(MMFuseError):
    """Classifier configuration violating its invariants."""


class TrainingError(MMFuseError):
    """Training diverged or could not proceed."""


class SearchError(MMFuseError):
    """Hyperparameter search could not produce a usable trial."""
