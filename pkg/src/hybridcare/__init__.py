"""Call-in thresholds and capacity allocation for hybrid on-site/remote care."""
from ._accel import BACKEND
from .analytics import DerivedCoeffs, PatientParams, derive_coeffs
from .errors import DomainError, IdentifiabilityError, InfeasibleError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DerivedCoeffs",
    "DomainError",
    "IdentifiabilityError",
    "InfeasibleError",
    "PatientParams",
    "ValidationError",
    "derive_coeffs",
]
