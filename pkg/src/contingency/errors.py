class InvalidStateError(ValueError):
    """A simulation state violates its invariants."""


class ConfigError(ValueError):
    """Experiment configuration is malformed or inconsistent.

    ``errors`` holds every problem found, not just the first.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class InsufficientDataError(ValueError):
    """Too few observations for a stable estimate."""
