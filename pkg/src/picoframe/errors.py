"""Exception types shared across the package."""


class PicoframeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PicoframeError):
    """Invalid configuration or usage (CLI exit code 1)."""


class DataError(PicoframeError):
    """Malformed corpus, embedding, or prediction data (CLI exit code 2)."""


class PromptTooLongError(PicoframeError):
    """Assembled prompt exceeded the configured character guard."""
