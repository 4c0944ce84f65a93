"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array or vector dimensions do not agree."""


class EpisodeDone(RuntimeError):
    """``step`` was called on an environment whose episode has ended."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``field`` carries the dotted path of the offending entry (``ppo.gamma``).
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class TrainingDivergence(RuntimeError):
    """A loss or gradient became non-finite during training."""
