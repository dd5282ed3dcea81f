"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration/usage problems exit 2,
data problems exit 3, numeric failures exit 4.
"""


class KoopcastError(Exception):
    """Base class for all package errors."""


class DimensionError(KoopcastError, ValueError):
    """Shapes or widths of operands do not agree."""


class DomainError(KoopcastError, ValueError):
    """An argument lies outside an operation's domain (empty signal, eps <= 0)."""


class FormatError(KoopcastError, ValueError):
    """A serialized artifact (spectrum, checkpoint, CSV) is internally inconsistent."""


class ConfigurationError(KoopcastError, ValueError):
    """A configuration value is invalid or incompatible (e.g. patch length)."""


class DataError(KoopcastError, ValueError):
    """Input data could not be parsed or violates the strict-parse contract."""


class ContractError(KoopcastError, ValueError):
    """An API contract was violated (e.g. backward() on a non-scalar loss)."""


class NumericError(KoopcastError, RuntimeError):
    """A numeric procedure failed (divergence, non-finite values, no convergence)."""


class SimulationDivergedError(NumericError):
    """A simulated trajectory left the finite range."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
