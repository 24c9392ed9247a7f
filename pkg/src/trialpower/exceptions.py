"""Exception types shared across the package.

The CLI maps these onto process exit codes, so raising the right type
matters: ValidationError -> 2, InfeasibleDesignError -> 3, DataError -> 4.
"""


class ValidationError(ValueError):
    """An argument or configuration violates a documented precondition."""


class DataError(ValueError):
    """Input data is malformed or too degenerate to work with."""


class InfeasibleDesignError(RuntimeError):
    """No sample size within the search limit reaches the target power.

    Attributes
    ----------
    achieved_power : float or None
        Power at the largest sample size considered, when known.
    """

    def __init__(self, message, achieved_power=None):
        super().__init__(message)
        self.achieved_power = achieved_power
