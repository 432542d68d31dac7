class ThinFilmError(Exception):
    """Base class for solver errors."""


class InvalidDomainError(ThinFilmError, ValueError):
    pass


class MismatchedGridsError(ThinFilmError, ValueError):
    pass


class SingularMatrixError(ThinFilmError):
    pass


class NewtonDivergedError(ThinFilmError):
    def __init__(self, message, step=None, iterations=None):
        super().__init__(message)
        self.step = step
        self.iterations = iterations


class LineSearchError(ThinFilmError):
    pass


class ConfigError(ThinFilmError, ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class ProfileError(ThinFilmError, ValueError):
    pass
