"""Exception hierarchy."""


class MLSError(Exception):
    """Base class for simulator errors."""


class ContractViolation(MLSError, ValueError):
    """A precondition or invariant of an operation was broken."""


class MissingKindError(MLSError, LookupError):
    """No agent of the requested kind exists, so the statistic is undefined."""


class NotConvergedError(MLSError, ArithmeticError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(MLSError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class GenerationError(MLSError):
    def __init__(self, generation: int, cause: Exception):
        super().__init__(f"generation {generation}: {cause}")
        self.generation = generation
        self.cause = cause
