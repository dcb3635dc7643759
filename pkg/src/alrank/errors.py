"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError / ParseError are usage
problems (exit 2), TrainingError is a runtime failure (exit 1).
"""


class ParseError(ValueError):
    """Malformed input data (carries the offending line number in its message)."""


class ConfigError(ValueError):
    """Invalid configuration: bad objective declaration, missing bounds, etc."""


class TrainingError(RuntimeError):
    """Training aborted (e.g. NaN scores, degenerate cost scale)."""
