class CVRaceError(Exception):
    pass


class DataError(CVRaceError, ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(CVRaceError, ValueError):
    """Invalid run or race configuration."""


class ConvergenceError(CVRaceError, ArithmeticError):
    """A numerical routine could not reach its tolerance.

    ``achieved`` holds the best tolerance reached, when known.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
