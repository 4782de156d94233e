class InputError(ValueError):
    """Invalid input data or parameters (bad CSV rows, out-of-range values)."""


class BudgetExceeded(RuntimeError):
    """An enumeration oracle refused to run because the instance is too large."""
