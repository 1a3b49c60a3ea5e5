"""Analytic solver and simulation oracle for MAP-driven batch-service queues
with queue-size-dependent single and multiple vacations."""

__version__ = "0.1.0"

from .errors import (
    BulkVacError,
    ConfigError,
    ModelValidationError,
    SimulationError,
    SolverError,
    StabilityError,
)
from .kernels import Kernel, KernelCoefficients, kernel_coefficients, kernel_eval
from .processes import (
    MarkovianArrivalProcess,
    PhaseTypeDistribution,
    QueueModel,
    erlang,
    exponential,
    validate_map,
)
from .solver import (
    ArbitraryDistributions,
    BoundaryUnknowns,
    EmbeddedDistributions,
    PerformanceReport,
    SolveResult,
    SolverOptions,
    arbitrary_epoch,
    build_characteristic,
    measures,
    service_joint,
    sigma_and_E,
    solve,
    solve_boundary,
    vacation_termination,
)
from .simulate import SimEstimates, effective_rate_check, simulate

__all__ = [
    "BulkVacError", "ConfigError", "ModelValidationError", "SimulationError",
    "SolverError", "StabilityError",
    "Kernel", "KernelCoefficients", "kernel_coefficients", "kernel_eval",
    "MarkovianArrivalProcess", "PhaseTypeDistribution", "QueueModel",
    "erlang", "exponential", "validate_map",
    "ArbitraryDistributions", "BoundaryUnknowns", "EmbeddedDistributions",
    "PerformanceReport", "SolveResult", "SolverOptions",
    "arbitrary_epoch", "build_characteristic", "measures", "service_joint",
    "sigma_and_E", "solve", "solve_boundary", "vacation_termination",
    "SimEstimates", "effective_rate_check", "simulate",
]
