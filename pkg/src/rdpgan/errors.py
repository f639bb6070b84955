"""Exception types shared across the package."""


class PrivacyConditionError(ValueError):
    """The DP conversion precondition ``log(1/delta) >= eps**2 * n`` failed.

    ``lhs`` is ``log(1/delta)`` and ``rhs`` is ``eps**2 * n``.
    """

    def __init__(self, lhs: float, rhs: float):
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(
            f"conversion needs log(1/delta) >= eps^2 * n, got {lhs!r} < {rhs!r}"
        )


class CalibrationError(ValueError):
    """No noise scale satisfies the requested budget."""

    def __init__(self, message: str, max_epsilon_total: float):
        self.max_epsilon_total = max_epsilon_total
        super().__init__(message)


class BudgetExceededError(RuntimeError):
    pass


class TrainingDivergenceError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")


class SelectionError(RuntimeError):
    pass


class IngestionError(ValueError):
    pass


class ConfigError(ValueError):
    pass
