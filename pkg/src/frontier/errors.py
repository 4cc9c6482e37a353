"""
Exception hierarchy for the frontier package.

Library code raises these; the CLI turns them into messages and exit codes.
"""


class FrontierError(Exception):
    """Base exception for all frontier errors."""

    pass


# --- Market data ---


class DataError(FrontierError):
    """Problem with input market data."""

    pass


class DataFileNotFoundError(DataError, FileNotFoundError):
    """A required CSV file does not exist."""

    pass


class MalformedDataError(DataError):
    """A CSV row or header could not be parsed."""

    pass


class NonPositivePriceError(DataError):
    """A price series contains a zero or negative value."""

    pass


class CalendarMisalignmentError(DataError):
    """Asset dates do not match the declared trading calendar."""

    pass


class InsufficientHistoryError(DataError):
    """Not enough trailing data for a rolling estimate or warm-up."""

    pass


class DegenerateBaselineError(DataError):
    """A normalisation baseline mean is zero."""

    pass


# --- Numerics ---


class DimensionError(FrontierError, ValueError):
    """Vector or matrix dimensions do not agree."""

    pass


class CostModelError(FrontierError):
    """Transaction cost inputs are invalid (zero volume, non-positive value)."""

    pass


class OptimizationError(FrontierError):
    """The convex program could not be built or solved."""

    pass


class InfeasibleProblemError(OptimizationError):
    """The requested constraint combination has no feasible point."""

    pass


class TrainingError(FrontierError):
    """Policy training diverged (non-finite objective or update)."""

    pass


# --- Simulation / sweep ---


class BacktestError(FrontierError):
    """Backtest could not run (bad range, insufficient warm-up)."""

    pass


class StrategyError(BacktestError):
    """A strategy raised or emitted weights off the simplex."""

    pass


class SweepError(FrontierError):
    """One or more sweep tasks failed.

    Attributes:
        failures: list of (gamma_risk, gamma_trade, seed, message) tuples
    """

    def __init__(self, message: str, failures: list[tuple[float, float, int, str]]):
        super().__init__(message)
        self.failures = failures


class DisjointSupportError(FrontierError):
    """Seed frontiers share no common excess-risk range."""

    pass


class ConfigError(FrontierError):
    """Run configuration is invalid."""

    pass
