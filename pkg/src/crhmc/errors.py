"""Exception types shared across the package."""


class NotPositiveDefiniteError(ArithmeticError):
    """A Cholesky pivot fell at or below the pivot tolerance.

    Signals rank deficiency of the factored matrix; consumed by
    dependent-row detection during preprocessing.
    """

    def __init__(self, pivot_index, pivot_value):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"non-positive pivot {pivot_value:.3e} at elimination step {pivot_index}"
        )


class InfeasiblePointError(ValueError):
    """A point violates strict box feasibility where strictness is required."""


class ModelInfeasibleError(ValueError):
    """The polytope has empty interior; carries a human-readable certificate."""

    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__(f"model infeasible: {certificate}")


class NumericalFailureError(ArithmeticError):
    """An iterative procedure failed to converge within its budget."""
