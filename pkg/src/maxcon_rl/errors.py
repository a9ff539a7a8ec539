"""Exception types raised across the package."""


class ContractError(ValueError):
    """An operation was called with arguments that violate its preconditions."""


class SolverError(RuntimeError):
    """The LP solver failed (iteration guard hit, infeasible or unbounded)."""


class BudgetExhausted(RuntimeError):
    """A search ran out of its node budget.

    ``best`` holds the best result found so far (may be None).
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FormatError(ValueError):
    """A dataset, correspondence or checkpoint file could not be parsed."""
