"""
Synthetic market generation.

Produces PricePanels with an upward, sideways or downward trend so the
full pipeline can run offline. Closes follow a geometric random walk with
drift; opens gap away from the previous close, high/low bracket the
session and volumes are log-normal.
"""

import logging
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from .data import CASH, PricePanel

logger = logging.getLogger(__name__)


class MarketRegime(str, Enum):
    """Trend of a synthetic market."""

    UPWARD = "upward"
    SIDEWAYS = "sideways"
    DOWNWARD = "downward"

    @property
    def default_drift(self) -> float:
        return REGIME_DRIFT[self]


# Daily log-drift per regime
REGIME_DRIFT = {
    MarketRegime.UPWARD: 0.0006,
    MarketRegime.SIDEWAYS: 0.0,
    MarketRegime.DOWNWARD: -0.0006,
}


def generate_market(
    n_assets: int = 5,
    n_days: int = 1000,
    regime: MarketRegime = MarketRegime.UPWARD,
    seed: int = 0,
    start_date: str = "2010-01-04",
    drift: Optional[float] = None,
    volatility: float = 0.012,
    risk_free_rate: float = 0.0001,
    base_volume: float = 5e7,
    gap_volatility: float = 0.004,
    market_correlation: float = 0.3,
) -> PricePanel:
    """
    Generate a synthetic daily OHLCV panel.

    Args:
        n_assets: Number of risky assets
        n_days: Number of trading days (business-day calendar)
        regime: Market trend; sets the drift unless ``drift`` is given
        seed: Random seed; equal seeds give identical panels
        start_date: First calendar date
        drift: Daily log-drift override shared by all assets
        volatility: Daily close-to-close log volatility
        risk_free_rate: Constant daily simple risk-free return
        base_volume: Median daily traded volume (currency units)
        gap_volatility: Std dev of the open's gap from the previous close
        market_correlation: Loading of each asset on a common market factor

    Returns:
        PricePanel with assets named A00, A01, ... followed by cash
    """
    if n_assets < 1:
        raise ValueError(f"n_assets must be >= 1, got {n_assets}")
    if n_days < 2:
        raise ValueError(f"n_days must be >= 2, got {n_days}")
    if not 0.0 <= market_correlation < 1.0:
        raise ValueError(f"market_correlation must be in [0, 1), got {market_correlation}")

    regime = MarketRegime(regime)
    mu = regime.default_drift if drift is None else drift
    rng = np.random.default_rng(seed)

    common = rng.standard_normal((n_days, 1))
    own = rng.standard_normal((n_days, n_assets))
    rho = np.sqrt(market_correlation)
    shocks = rho * common + np.sqrt(1.0 - market_correlation) * own

    log_steps = mu - 0.5 * volatility**2 + volatility * shocks
    log_steps[0] = 0.0
    start_prices = rng.uniform(20.0, 200.0, size=n_assets)
    close = start_prices * np.exp(np.cumsum(log_steps, axis=0))

    prev_close = np.vstack([start_prices, close[:-1]])
    gaps = rng.normal(0.0, gap_volatility, size=(n_days, n_assets))
    open_ = prev_close * np.exp(gaps)

    top = np.maximum(open_, close)
    bottom = np.minimum(open_, close)
    wick = np.abs(rng.normal(0.0, volatility / 2, size=(2, n_days, n_assets)))
    high = top * np.exp(wick[0])
    low = bottom * np.exp(-wick[1])

    volume = base_volume * np.exp(rng.normal(0.0, 0.25, size=(n_days, n_assets)))

    dates = pd.bdate_range(start=start_date, periods=n_days)
    logger.debug(
        "Generated %s market: %d assets x %d days (drift %.5f, seed %d)",
        regime.value,
        n_assets,
        n_days,
        mu,
        seed,
    )
    return PricePanel(
        assets=tuple(f"A{i:02d}" for i in range(n_assets)) + (CASH,),
        dates=dates,
        open=open_,
        high=high,
        low=low,
        close=close,
        volume=volume,
        risk_free=np.full(n_days, risk_free_rate),
    )


def constant_panel(
    closes: np.ndarray,
    risk_free: Optional[np.ndarray] = None,
    volume: float = 1e6,
    start_date: str = "2020-01-01",
    open_ratio: float = 1.0,
) -> PricePanel:
    """
    Build a panel from explicit close paths (shape (T, n)).

    Opens equal the close times ``open_ratio``; highs/lows bracket both.
    Handy for hand-checkable backtests.
    """
    closes = np.asarray(closes, dtype=float)
    if closes.ndim == 1:
        closes = closes[:, None]
    n_days, n_assets = closes.shape
    open_ = closes * open_ratio
    rf = np.zeros(n_days) if risk_free is None else np.asarray(risk_free, dtype=float)
    return PricePanel(
        assets=tuple(f"A{i:02d}" for i in range(n_assets)) + (CASH,),
        dates=pd.bdate_range(start=start_date, periods=n_days),
        open=open_,
        high=np.maximum(open_, closes),
        low=np.minimum(open_, closes),
        close=closes,
        volume=np.full((n_days, n_assets), float(volume)),
        risk_free=rf,
    )
