"""Exception hierarchy shared by all hgobs modules.

The CLI maps these onto process exit codes, so every failure raised from
library code should derive from :class:`HgobsError`.
"""


class HgobsError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ConfigError(HgobsError):
    exit_code = 2


class NumericalError(HgobsError):
    """A numerical routine could not produce a trustworthy result."""


class NotHurwitzError(NumericalError):
    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class StageError(NumericalError):
    """Failure inside one stage of the gain-assignment recursion."""

    def __init__(self, message, stage):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


class ConsistencyError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class DivergenceError(HgobsError):
    exit_code = 4

    def __init__(self, message, time):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time
