"""Exception hierarchy shared by the solver, simulator and CLI."""


class BulkVacError(Exception):
    """Base class for all package errors."""


class ModelValidationError(BulkVacError, ValueError):
    """An arrival process, phase-type law or queue model violates its invariants."""


class StabilityError(BulkVacError):
    """Traffic intensity at or above one; the steady state does not exist."""


class SolverError(BulkVacError):
    """The analytic pipeline failed (root structure, conditioning, divisibility)."""


class SimulationError(BulkVacError):
    """The event-driven simulation hit a guard (runaway queue, bad arguments)."""


class ConfigError(BulkVacError, ValueError):
    """A configuration file could not be parsed; message carries the field path."""
