"""Validated objects: specs, regular and totally-ordered implementations,
consistency checkers, and the consensus reduction, on a deterministic simulator."""

from .core import (
    ApplyResult,
    ConfigurationError,
    HistoryTrace,
    MalformedRunError,
    ObjectSpec,
    OperationRecord,
    OrderedOps,
    Status,
    VectorTimestamp,
    apply_centralized,
)
from .applications import crypto_spec, doall_spec, make_spec, punching_spec, versioned_spec
from .checkers import check_persistent_execution, check_persistent_validity, check_regular, check_total
from .kernel import Schedule
from .sim import Scenario, run

__all__ = [
    "ApplyResult",
    "ConfigurationError",
    "HistoryTrace",
    "MalformedRunError",
    "ObjectSpec",
    "OperationRecord",
    "OrderedOps",
    "Scenario",
    "Schedule",
    "Status",
    "VectorTimestamp",
    "apply_centralized",
    "check_persistent_execution",
    "check_persistent_validity",
    "check_regular",
    "check_total",
    "crypto_spec",
    "doall_spec",
    "make_spec",
    "punching_spec",
    "run",
    "versioned_spec",
]
