"""Exception types shared across the package.

Every error condition in the public contracts maps to a named class so
callers (and tests) can branch on the exact failure instead of string
matching messages.
"""


class DPSynthError(Exception):
    """Base class for all package errors."""


# -- data model ---------------------------------------------------------

class SchemaError(DPSynthError):
    """Schema definition violates its invariants."""


class MissingColumnError(DPSynthError):
    """CSV header does not cover the schema columns."""


class UnknownCategoricalValueError(DPSynthError):
    """A categorical cell is not in the column's domain."""


class MalformedRowError(DPSynthError):
    """A data row cannot be validated; carries the 1-based row number."""

    def __init__(self, row_number: int, message: str):
        super().__init__(f"row {row_number}: {message}")
        self.row_number = row_number


class EmptyFileError(DPSynthError):
    """Dataset file has no data rows."""


class OverflowGuardError(DPSynthError):
    """Full domain size exceeds the configured cap."""


# -- workload -----------------------------------------------------------

class KTooLargeError(DPSynthError):
    """Marginal arity exceeds the column count."""


class DuplicateSubsetError(DPSynthError):
    """The same column subset appears twice in a workload."""


class WrongColumnKindError(DPSynthError):
    """Column kind does not match what the workload requires."""


class EmptyDatasetError(DPSynthError):
    """Operation requires at least one record."""


class LengthMismatchError(DPSynthError):
    """Answer vectors come from different workloads."""


class EmptyPoolError(DPSynthError):
    """Candidate pool is empty."""


# -- privacy ------------------------------------------------------------

class NonPositiveSensitivityError(DPSynthError):
    """Sensitivity must be strictly positive."""


class InfiniteBudgetError(DPSynthError):
    """calibrate() refuses infinite budgets; callers must take the sigma=0 path explicitly."""


class ZeroIterationsError(DPSynthError):
    """Budget schedules need at least one iteration."""


class BudgetExceededError(DPSynthError):
    """A charge would push the ledger past its cap. Fatal: abort before any release."""


# -- generator ----------------------------------------------------------

class GeneratorUnavailableError(DPSynthError):
    """Remote generator could not be reached within the retry budget."""


class AuthFailureError(DPSynthError):
    """Remote endpoint rejected the configured credentials."""


class MalformedResponseError(DPSynthError):
    """Remote endpoint returned a payload that cannot be decoded."""


class RetryBudgetExhaustedError(DPSynthError):
    """Generator could not supply enough valid records."""


class SchemaHashMismatchError(DPSynthError):
    """Cache file was generated for a different schema."""


class CorruptCacheError(DPSynthError):
    """Cache file cannot be parsed."""


class PrivacyFirewallError(DPSynthError):
    """A generator request would carry data that never went through a private release."""


# -- public-data fitting -------------------------------------------------

class EmptyPublicSetError(DPSynthError):
    """Weight fitting needs at least one public record."""


class DegenerateFitError(DPSynthError):
    """Fitted weights are all zero; no distribution to sample from."""


# -- harness ------------------------------------------------------------

class WorkloadMismatchError(DPSynthError):
    """Reports to merge were produced against different workloads."""


class ConfigError(DPSynthError):
    """Experiment configuration is invalid."""
