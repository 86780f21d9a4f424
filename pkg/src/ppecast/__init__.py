"""PPE demand forecasting for inpatient services.

Patient classes are modeled as independent infinite-server queues with
time-varying Poisson admissions; closed-form conditional demand bounds are
validated against a discrete-event simulation oracle.
"""

from .model import (
    ForecastReport,
    InteractionType,
    PatientClassProfile,
    PatientRecord,
    PpeType,
    PpeUsageConfig,
    ReusePolicy,
    Scenario,
    StaffGroup,
    UsageMatrix,
    Violation,
    validate_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "ForecastReport",
    "InteractionType",
    "PatientClassProfile",
    "PatientRecord",
    "PpeType",
    "PpeUsageConfig",
    "ReusePolicy",
    "Scenario",
    "StaffGroup",
    "UsageMatrix",
    "Violation",
    "validate_scenario",
    "__version__",
]
