class SteinVerifyError(Exception):
    """Base class for errors raised by the verification toolkit."""


class DimensionMismatchError(SteinVerifyError, ValueError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"dimension mismatch: set lives in R^{expected}, point has {got} coordinates")
        self.expected = expected
        self.got = got


class NonConvergenceError(SteinVerifyError):
    def __init__(self, result):
        super().__init__(
            f"projection did not converge after {result.iterations} iterations "
            f"(best distance {result.distance:.3e})"
        )
        self.result = result


class UnsupportedSetError(SteinVerifyError, ValueError):
    pass


class QuadratureBudgetExceeded(SteinVerifyError):
    def __init__(self, requested: float, achieved: float, n_z: int):
        super().__init__(
            f"requested standard error {requested:.3e} is below the {achieved:.3e} "
            f"achievable with n_z={n_z} Gaussian samples"
        )
        self.requested = requested
        self.achieved = achieved


class SummandIndexError(SteinVerifyError, IndexError):
    def __init__(self, index: int, n: int):
        super().__init__(f"summand index {index} outside 1..{n}")


class ConfigParseError(SteinVerifyError):
    def __init__(self, message: str, line: int | None = None):
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"{location}{message}")
        self.line = line


class ConfigValidationError(SteinVerifyError):
    def __init__(self, field: str, message: str):
        super().__init__(f"invalid value for '{field}': {message}")
        self.field = field
