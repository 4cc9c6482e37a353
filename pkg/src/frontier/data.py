"""
Market Data Ingestion and Estimation.

Loads daily OHLCV series and a risk-free rate from CSV files, and derives
everything the strategies consume from them: simple/log returns, the
open/close volatility proxy, trailing 10-day volume and volatility
estimates, normalised state features and noisy return forecasts.

File formats:
    <ASSET>.csv:     date,open,high,low,close,volume
    risk_free.csv:   date,rate   (daily simple return, decimal fraction)
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .errors import (
    CalendarMisalignmentError,
    DataFileNotFoundError,
    DegenerateBaselineError,
    DimensionError,
    InsufficientHistoryError,
    MalformedDataError,
    NonPositivePriceError,
)

logger = logging.getLogger(__name__)

ASSET_COLUMNS = ["date", "open", "high", "low", "close", "volume"]
RISK_FREE_COLUMNS = ["date", "rate"]
RISK_FREE_FILE = "risk_free.csv"
CASH = "CASH"

# Trailing window for V̂ and σ̂ (days t-10 .. t-1, day t excluded)
ROLLING_WINDOW = 10
# Days before the training start used as the normalisation baseline
BASELINE_DAYS = 30

DateLike = Union[str, pd.Timestamp]


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PricePanel:
    """
    Daily OHLCV data for n risky assets plus a cash slot.

    Price/volume arrays have shape (T, n) and exclude cash; ``assets`` lists
    the n risky identifiers followed by the cash identifier. Cash returns
    come from ``risk_free`` (shape (T,)).
    """

    assets: tuple[str, ...]
    dates: pd.DatetimeIndex
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    risk_free: np.ndarray

    def __post_init__(self):
        n_dates = len(self.dates)
        n_risky = len(self.assets) - 1
        if n_risky < 1:
            raise DimensionError("panel needs at least one risky asset plus cash")
        for name in ("open", "high", "low", "close", "volume"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (n_dates, n_risky):
                raise DimensionError(
                    f"{name} has shape {arr.shape}, expected {(n_dates, n_risky)}"
                )
            object.__setattr__(self, name, arr)
        rf = _frozen(self.risk_free)
        if rf.shape != (n_dates,):
            raise DimensionError(f"risk_free has shape {rf.shape}, expected {(n_dates,)}")
        object.__setattr__(self, "risk_free", rf)

        for name in ("open", "high", "low", "close"):
            arr = getattr(self, name)
            if not np.all(arr > 0):
                row, col = np.argwhere(~(arr > 0))[0]
                raise NonPositivePriceError(
                    f"non-positive price: {self.assets[col]} {name} on "
                    f"{self.dates[row].date()}"
                )
        if not np.all(self.volume >= 0):
            row, col = np.argwhere(~(self.volume >= 0))[0]
            raise MalformedDataError(
                f"negative volume: {self.assets[col]} on {self.dates[row].date()}"
            )

    @property
    def n_risky(self) -> int:
        """Number of risky (non-cash) assets."""
        return len(self.assets) - 1

    @property
    def n_assets(self) -> int:
        """Number of assets including cash (n+1)."""
        return len(self.assets)

    @property
    def cash_index(self) -> int:
        return len(self.assets) - 1

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self, date: DateLike) -> int:
        """Position of ``date`` in the calendar (KeyError if absent)."""
        return int(self.dates.get_loc(pd.Timestamp(date)))

    def replace(self, **changes) -> "PricePanel":
        """Return a copy with some arrays replaced."""
        fields = {
            "assets": self.assets,
            "dates": self.dates,
            "open": self.open,
            "high": self.high,
            "low": self.low,
            "close": self.close,
            "volume": self.volume,
            "risk_free": self.risk_free,
        }
        fields.update(changes)
        return PricePanel(**fields)


@dataclass(frozen=True)
class ReturnsPanel:
    """
    Per-date returns for all n+1 assets (cash last).

    Row k holds the return from ``dates[k-1]`` to ``dates[k]`` of the
    originating panel, i.e. ``dates`` here starts at the panel's second date.
    """

    assets: tuple[str, ...]
    dates: pd.DatetimeIndex
    simple_returns: np.ndarray
    log_returns: np.ndarray


@dataclass(frozen=True)
class ForecastConfig:
    """Noisy forecast parameters: r̂ = α (r + ε), ε ~ N(0, σ²_ε)."""

    noise_variance: float = 0.02
    returns_variance: float = 0.005
    horizon: int = 2

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.returns_variance <= 0:
            raise ValueError(f"returns_variance must be > 0, got {self.returns_variance}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @property
    def alpha(self) -> float:
        """MSE-optimal shrinkage σ²_r / (σ²_r + σ²_ε)."""
        return self.returns_variance / (self.returns_variance + self.noise_variance)


# --- Loading ---


def _read_csv(path: Path, columns: list[str]) -> pd.DataFrame:
    """Read a CSV with an exact header and numeric, ISO-dated rows."""
    if not path.exists():
        raise DataFileNotFoundError(f"Data file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise MalformedDataError(f"{path}: cannot parse CSV: {e}") from e

    if list(frame.columns) != columns:
        raise MalformedDataError(
            f"{path}: expected header {','.join(columns)}, got {','.join(frame.columns)}"
        )

    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    bad_dates = dates.isna()
    if bad_dates.any():
        row = int(np.flatnonzero(bad_dates.to_numpy())[0])
        raise MalformedDataError(f"{path}: malformed row {row + 2}: bad date {frame['date'][row]!r}")

    values = frame[columns[1:]].apply(pd.to_numeric, errors="coerce")
    bad_rows = values.isna().any(axis=1) | ~np.isfinite(values.to_numpy(dtype=float)).all(axis=1)
    if bad_rows.any():
        row = int(np.flatnonzero(bad_rows.to_numpy())[0])
        raise MalformedDataError(f"{path}: malformed row {row + 2}: {frame.iloc[row].tolist()}")

    values.index = pd.DatetimeIndex(dates)
    if values.index.has_duplicates:
        dup = values.index[values.index.duplicated()][0]
        raise MalformedDataError(f"{path}: duplicate date {dup.date()}")
    return values.sort_index()


def load_panel(
    path: Union[str, Path],
    calendar: Optional[tuple[DateLike, DateLike]] = None,
    assets: Optional[Sequence[str]] = None,
    risk_free_file: str = RISK_FREE_FILE,
) -> PricePanel:
    """
    Load a PricePanel from a directory of CSV files.

    The risk-free series defines the trading calendar; every asset must
    have exactly the same dates inside ``calendar`` (inclusive).

    Args:
        path: Directory containing one ``<ASSET>.csv`` per asset and the
            risk-free file
        calendar: (start, end) dates to keep; None keeps everything
        assets: Asset identifiers to load (default: every CSV except the
            risk-free file, sorted by name)
        risk_free_file: File name of the risk-free series

    Returns:
        Aligned, immutable PricePanel

    Raises:
        DataFileNotFoundError: Directory or a referenced file is missing
        MalformedDataError: Bad header or unparseable row
        NonPositivePriceError: Zero or negative price
        CalendarMisalignmentError: Asset dates differ from the calendar
    """
    directory = Path(path)
    if not directory.is_dir():
        raise DataFileNotFoundError(f"Data directory not found: {directory}")

    rf = _read_csv(directory / risk_free_file, RISK_FREE_COLUMNS)
    if calendar is not None:
        start, end = pd.Timestamp(calendar[0]), pd.Timestamp(calendar[1])
        rf = rf.loc[(rf.index >= start) & (rf.index <= end)]
    if rf.empty:
        raise CalendarMisalignmentError(f"calendar misalignment: no risk-free dates in {calendar}")
    trading_days = rf.index

    if assets is None:
        assets = sorted(p.stem for p in directory.glob("*.csv") if p.name != risk_free_file)
    if not assets:
        raise DataFileNotFoundError(f"No asset CSV files in {directory}")

    frames = {}
    for asset in assets:
        frame = _read_csv(directory / f"{asset}.csv", ASSET_COLUMNS)
        frame = frame.loc[(frame.index >= trading_days[0]) & (frame.index <= trading_days[-1])]
        missing = trading_days.difference(frame.index)
        extra = frame.index.difference(trading_days)
        if len(missing) or len(extra):
            which = missing[0] if len(missing) else extra[0]
            kind = "missing" if len(missing) else "unexpected"
            raise CalendarMisalignmentError(
                f"calendar misalignment: {asset} has {kind} date {which.date()}"
            )
        frames[asset] = frame.loc[trading_days]
        logger.debug("Loaded %s: %d rows", asset, len(frame))

    def stack(column: str) -> np.ndarray:
        return np.column_stack([frames[a][column].to_numpy(dtype=float) for a in assets])

    return PricePanel(
        assets=tuple(assets) + (CASH,),
        dates=pd.DatetimeIndex(trading_days),
        open=stack("open"),
        high=stack("high"),
        low=stack("low"),
        close=stack("close"),
        volume=stack("volume"),
        risk_free=rf["rate"].to_numpy(dtype=float),
    )


def write_panel(panel: PricePanel, directory: Union[str, Path]) -> list[Path]:
    """
    Write a PricePanel as CSV files that ``load_panel`` reads back.

    Returns:
        Paths written (asset files first, risk-free file last)
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    dates = panel.dates.strftime("%Y-%m-%d")
    written = []
    for i, asset in enumerate(panel.assets[:-1]):
        frame = pd.DataFrame(
            {
                "date": dates,
                "open": panel.open[:, i],
                "high": panel.high[:, i],
                "low": panel.low[:, i],
                "close": panel.close[:, i],
                "volume": panel.volume[:, i],
            }
        )
        target = out / f"{asset}.csv"
        frame.to_csv(target, index=False, float_format="%.10g")
        written.append(target)
    target = out / RISK_FREE_FILE
    pd.DataFrame({"date": dates, "rate": panel.risk_free}).to_csv(
        target, index=False, float_format="%.10g"
    )
    written.append(target)
    return written


# --- Returns and estimates ---


def compute_returns(panel: PricePanel) -> ReturnsPanel:
    """
    Simple and log returns for every asset, cash last.

    Raises:
        InsufficientHistoryError: Panel has a single date
    """
    if len(panel) < 2:
        raise InsufficientHistoryError("compute_returns needs at least two dates")
    risky = panel.close[1:] / panel.close[:-1] - 1.0
    simple = np.column_stack([risky, panel.risk_free[1:]])
    return ReturnsPanel(
        assets=panel.assets,
        dates=panel.dates[1:],
        simple_returns=_frozen(simple),
        log_returns=_frozen(np.log1p(simple)),
    )


def _trailing_mean(series: np.ndarray, t: int, window: int = ROLLING_WINDOW) -> np.ndarray:
    """Mean of rows t-window .. t-1 (row t excluded)."""
    series = np.asarray(series, dtype=float)
    if t < window or t > len(series):
        raise InsufficientHistoryError(
            f"insufficient history: need {window} days before index {t}"
        )
    return series[t - window : t].mean(axis=0)


def rolling_volume_estimate(panel: PricePanel, t: int) -> np.ndarray:
    """V̂_t: mean traded volume over the 10 days before day t, per risky asset."""
    return _trailing_mean(panel.volume, t)


def rolling_volatility_estimate(sigmas: np.ndarray, t: int) -> np.ndarray:
    """σ̂_t: mean volatility proxy over the 10 days before day t."""
    return _trailing_mean(sigmas, t)


def intraday_volatility_proxy(open_price, close_price):
    """|log(open) - log(close)|, elementwise for arrays."""
    o = np.asarray(open_price, dtype=float)
    c = np.asarray(close_price, dtype=float)
    if not (np.all(o > 0) and np.all(c > 0)):
        raise NonPositivePriceError("non-positive price in volatility proxy")
    proxy = np.abs(np.log(o) - np.log(c))
    return float(proxy) if proxy.ndim == 0 else proxy


def volatility_proxy_series(panel: PricePanel) -> np.ndarray:
    """Volatility proxy for every date and risky asset, shape (T, n)."""
    return intraday_volatility_proxy(panel.open, panel.close)


def rolling_estimates(series: np.ndarray, window: int = ROLLING_WINDOW) -> np.ndarray:
    """
    Trailing means for every date; rows without full history are NaN.

    Row t equals ``_trailing_mean(series, t)`` for t >= window.
    """
    series = np.asarray(series, dtype=float)
    out = np.full_like(series, np.nan)
    if len(series) <= window:
        return out
    csum = np.cumsum(np.vstack([np.zeros((1,) + series.shape[1:]), series]), axis=0)
    out[window:] = (csum[window:-1] - csum[: -window - 1]) / window
    return out


def normalize_features(values: np.ndarray, baseline_window: np.ndarray) -> np.ndarray:
    """
    Divide each asset's series by its mean over the baseline window.

    Args:
        values: Series to normalise, shape (T, n) or (n,)
        baseline_window: The BASELINE_DAYS rows preceding the training start

    Raises:
        InsufficientHistoryError: Fewer than BASELINE_DAYS baseline rows
            (or rows still inside the rolling warm-up)
        DegenerateBaselineError: Some asset's baseline mean is zero
    """
    baseline_window = np.asarray(baseline_window, dtype=float)
    if len(baseline_window) < BASELINE_DAYS or np.isnan(baseline_window).any():
        raise InsufficientHistoryError(
            f"insufficient pre-training history: need {BASELINE_DAYS} complete baseline days"
        )
    baseline = baseline_window[-BASELINE_DAYS:].mean(axis=0)
    if np.any(baseline == 0):
        raise DegenerateBaselineError("degenerate baseline: zero mean over the baseline window")
    return np.asarray(values, dtype=float) / baseline


# --- Forecasts ---


def simulate_forecast(
    realized: np.ndarray, cfg: ForecastConfig, rng: np.random.Generator
) -> np.ndarray:
    """
    Noisy forecast α (r + ε) of realised non-cash returns.

    With ``cfg.noise_variance == 0`` the result equals ``realized`` exactly.
    """
    realized = np.asarray(realized, dtype=float)
    noise = rng.normal(0.0, np.sqrt(cfg.noise_variance), size=realized.shape)
    return cfg.alpha * (realized + noise)


def forecast_matrix(returns: ReturnsPanel, cfg: ForecastConfig, seed: int) -> np.ndarray:
    """
    Forecasts for every returns row, cash column set to the risk-free rate.

    Each (row, asset) cell draws its noise from its own stream keyed by
    (seed, row, asset), so a forecast never depends on how many other rows
    or assets were generated.
    """
    simple = returns.simple_returns
    out = np.empty_like(simple)
    for k in range(len(simple)):
        for i in range(simple.shape[1] - 1):
            rng = np.random.default_rng([seed, k, i])
            out[k, i] = simulate_forecast(simple[k, i : i + 1], cfg, rng)[0]
    out[:, -1] = simple[:, -1]
    return out
