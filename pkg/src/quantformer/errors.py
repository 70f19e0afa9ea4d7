"""Exception types shared across the package."""


class QuantformerError(Exception):
    """Base class for all package errors."""


class ContractError(QuantformerError):
    """An operation was called with arguments violating its contract
    (wrong shape, empty input, value out of range)."""


class ConfigError(QuantformerError):
    """Invalid configuration value or combination."""


class DataError(QuantformerError):
    """Bad input data (duplicate keys, inconsistent panel)."""


class ParseError(DataError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateSectionError(QuantformerError):
    """A cross-section is too small to normalize (fewer than 2 stocks)."""


class NumericError(QuantformerError):
    """A non-finite value appeared inside the network forward pass."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class TrainingDiverged(QuantformerError):
    """Training produced a non-finite loss. Carries the epoch index."""

    def __init__(self, epoch):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class BacktestGapError(QuantformerError):
    """A period inside the backtest range is missing its cross-section or
    realized returns."""

    def __init__(self, period, detail=""):
        msg = f"backtest gap at period {period}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.period = period


class UndefinedMetricError(QuantformerError):
    """The metric is not defined for this series (e.g. zero variance)."""
