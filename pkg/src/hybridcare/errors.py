"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised for invalid parameters or configuration."""


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class InfeasibleError(Exception):
    """No threshold keeps the total workload within capacity.

    Parameters
    ----------
    w_min : float
        Smallest achievable total workload.
    capacity : float
        Requested capacity.
    """

    def __init__(self, w_min, capacity, message=None):
        self.w_min = float(w_min)
        self.capacity = float(capacity)
        if message is None:
            message = f"infeasible: minimal workload {self.w_min:.10g} exceeds capacity {self.capacity:.10g}"
        super().__init__(message)


class IdentifiabilityError(ValueError):
    """Data do not pin down the requested parameters."""


class DegenerateDataError(ValidationError):
    """Sample has (numerically) zero spread, so a scale parameter is not estimable."""
