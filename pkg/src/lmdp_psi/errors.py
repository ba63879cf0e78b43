"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed instance, policy or experiment configuration."""


class SizeError(RuntimeError):
    """An exact enumeration would exceed its node budget."""

    def __init__(self, message, size=None, budget=None):
        super().__init__(message)
        self.size = size
        self.budget = budget


class RankError(ValueError):
    """Emission matrix lacks full column rank."""

    def __init__(self, message, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values
