"""Exception types shared across the package."""


class TruncationError(ValueError):
    """Photon-number content does not fit below the truncation order."""


class UndefinedStatisticError(ValueError):
    """A normalized statistic was requested for data that cannot define it
    (zero mean excitation, zero singles, zero conditional pairs, ...)."""


class UnderdeterminedError(ValueError):
    """Fewer detector efficiencies than unknown populations."""


class DataInconsistencyError(ValueError):
    """Measured counts are mutually inconsistent (e.g. negative no-click
    frequencies after loss rescaling)."""


class ModeCutoffError(ValueError):
    """The guided mode does not exist for the requested geometry."""


class FitFailureError(RuntimeError):
    """Nonlinear fit did not reach a finite optimum."""


class TagFormatError(ValueError):
    """Malformed time-tag file; carries the byte offset of the defect."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class ConfigError(ValueError):
    """Invalid scenario configuration; message names the offending field."""
