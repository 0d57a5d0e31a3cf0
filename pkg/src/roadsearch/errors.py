"""Exception types shared across the package."""


class RoadSearchError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(RoadSearchError, ValueError):
    """A config file, preset, or parameter combination is unusable."""


class ExecutorError(RoadSearchError):
    """An executor plugin could not be resolved or failed to communicate."""
