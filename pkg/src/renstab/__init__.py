"""renstab: transient-stability toolkit with statistically assigned
WECC-style renewable dynamic models.

Workflow: load or build a power-flow case, assign renewable dynamic models
from the parameter-template library, run time-domain contingency
simulations, and score the result with the Mr/Mf/Mv stability metrics.
"""

from renstab.network import (
    Branch,
    Bus,
    CaseFormatError,
    Generator,
    Load,
    PowerFlowCase,
    Shunt,
    ValidationReport,
    build_ybus,
    case_from_dict,
    case_to_dict,
    load_case,
    save_case,
    validate_case,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "Bus",
    "CaseFormatError",
    "Generator",
    "Load",
    "PowerFlowCase",
    "Shunt",
    "ValidationReport",
    "build_ybus",
    "case_from_dict",
    "case_to_dict",
    "load_case",
    "save_case",
    "validate_case",
    "__version__",
]
