"""
Precomputed market state and point-in-time views of it.

A MarketContext derives everything strategies consume from a PricePanel
once: returns, volatility proxies, rolling estimates, normalised features,
forecasts and trailing risk models. A MarketView pins a decision index t
and only hands out information known at the close of day t, plus the
forecast channel for days t+1 .. t+H.

Index conventions (all panel row indices):
    returns[d]        return from close d-1 to close d (row 0 undefined)
    volume_hat[t]     mean volume over days t-10 .. t-1
    forecasts[d]      noisy forecast of returns[d]
A decision at t sets the weights held over t -> t+1, earning returns[t+1].
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .costs import CostParams, CostTerms
from .data import (
    BASELINE_DAYS,
    ROLLING_WINDOW,
    ForecastConfig,
    PricePanel,
    ReturnsPanel,
    compute_returns,
    forecast_matrix,
    normalize_features,
    rolling_estimates,
    volatility_proxy_series,
)
from .errors import InsufficientHistoryError
from .network import LOOKBACK, StateInput
from .risk import (
    COVARIANCE_WINDOW,
    FactorRiskModel,
    default_factor_count,
    fit_factor_model,
    trailing_covariance,
)

logger = logging.getLogger(__name__)


def _pad_first_row(values: np.ndarray) -> np.ndarray:
    pad = np.full((1,) + values.shape[1:], np.nan)
    return np.vstack([pad, values])


@dataclass
class MarketContext:
    """All derived market series for one panel, forecast seed and baseline."""

    panel: PricePanel
    returns_panel: ReturnsPanel
    returns: np.ndarray  # (T, n+1), row 0 NaN
    log_returns: np.ndarray  # (T, n+1), row 0 NaN
    sigma: np.ndarray  # (T, n) volatility proxy
    volume_hat: np.ndarray  # (T, n), NaN before the window fills
    sigma_hat: np.ndarray  # (T, n)
    forecasts: np.ndarray  # (T, n+1), row 0 NaN
    forecast_cfg: ForecastConfig
    seed: int
    baseline_end: Optional[int] = None
    n_factors: Optional[int] = None
    covariance_window: int = COVARIANCE_WINDOW
    lookback: int = LOOKBACK
    _features: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)
    _risk_models: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        panel: PricePanel,
        forecast_cfg: Optional[ForecastConfig] = None,
        seed: int = 0,
        baseline_end: Optional[int] = None,
        n_factors: Optional[int] = None,
        covariance_window: int = COVARIANCE_WINDOW,
        lookback: int = LOOKBACK,
    ) -> "MarketContext":
        """
        Derive every series from ``panel``.

        Args:
            panel: Market data
            forecast_cfg: Forecast noise and horizon
            seed: Forecast noise seed
            baseline_end: Panel index of the training start; features are
                normalised by the BASELINE_DAYS rows before it
            n_factors: Risk-model factor count (default min(15, n-1))
            covariance_window: Trailing rows for the covariance estimate
            lookback: Log-return window length L for policy inputs
        """
        cfg = forecast_cfg or ForecastConfig()
        returns_panel = compute_returns(panel)
        sigma = volatility_proxy_series(panel)
        return cls(
            panel=panel,
            returns_panel=returns_panel,
            returns=_pad_first_row(returns_panel.simple_returns),
            log_returns=_pad_first_row(returns_panel.log_returns),
            sigma=sigma,
            volume_hat=rolling_estimates(panel.volume),
            sigma_hat=rolling_estimates(sigma),
            forecasts=_pad_first_row(forecast_matrix(returns_panel, cfg, seed)),
            forecast_cfg=cfg,
            seed=seed,
            baseline_end=baseline_end,
            n_factors=n_factors,
            covariance_window=covariance_window,
            lookback=lookback,
        )

    def with_seed(self, seed: int) -> "MarketContext":
        """Same market with forecasts redrawn from ``seed``; caches are shared."""
        if seed == self.seed:
            return self
        forecasts = forecast_matrix(self.returns_panel, self.forecast_cfg, seed)
        return replace(self, forecasts=_pad_first_row(forecasts), seed=seed)

    def __getstate__(self):
        # Risk-model cache is rebuilt lazily in worker processes
        state = self.__dict__.copy()
        state["_risk_models"] = {}
        return state

    @property
    def n_assets(self) -> int:
        return self.panel.n_assets

    @property
    def n_risky(self) -> int:
        return self.panel.n_risky

    @property
    def k(self) -> int:
        return self.n_factors or default_factor_count(self.n_risky)

    def __len__(self) -> int:
        return len(self.panel)

    # --- Derived, lazily ---

    def features(self) -> tuple[np.ndarray, np.ndarray]:
        """Normalised (V̂, σ̂) for every row."""
        if self._features is None:
            if self.baseline_end is None:
                raise InsufficientHistoryError("feature normalisation needs a training start date")
            lo = self.baseline_end - BASELINE_DAYS
            if lo < ROLLING_WINDOW:
                raise InsufficientHistoryError(
                    f"insufficient pre-training history: training start index "
                    f"{self.baseline_end} leaves no complete {BASELINE_DAYS}-day baseline"
                )
            base = slice(lo, self.baseline_end)
            self._features = (
                normalize_features(self.volume_hat, self.volume_hat[base]),
                normalize_features(self.sigma_hat, self.sigma_hat[base]),
            )
        return self._features

    def risk_model(self, t: int) -> FactorRiskModel:
        """Factor model from the covariance of the returns ending at day t."""
        if t not in self._risk_models:
            cov = trailing_covariance(self.returns_panel, t, self.covariance_window)
            self._risk_models[t] = fit_factor_model(cov, self.k, cash_last=True)
        return self._risk_models[t]

    def fit_risk_model(self, start: int, end: int) -> FactorRiskModel:
        """Factor model from returns on days start+1 .. end (a whole slice)."""
        if end - start < 2:
            raise InsufficientHistoryError(f"need at least 2 return rows, got {end - start}")
        cov = trailing_covariance(self.returns_panel, end, end - start)
        return fit_factor_model(cov, self.k, cash_last=True)

    # --- Requirements ---

    def first_decision(self, needs_features: bool = False) -> int:
        """Earliest decision index with complete warm-up history."""
        first = max(self.covariance_window, ROLLING_WINDOW, self.lookback)
        if needs_features:
            self.features()
        return first

    def view(self, t: int) -> "MarketView":
        return MarketView(self, t)

    def realized_cost_terms(self, t: int, value: float, params: CostParams) -> CostTerms:
        """Cost coefficients for a trade at the close of day t (σ_t, V_t)."""
        return CostTerms.build(self.sigma[t], self.panel.volume[t], value, params)


class MarketView:
    """
    Information available when deciding at the close of day ``t``.
    """

    def __init__(self, context: MarketContext, t: int):
        if not 0 <= t < len(context) - 1:
            raise IndexError(f"decision index {t} outside 0 .. {len(context) - 2}")
        self._context = context
        self.t = t

    @property
    def date(self):
        return self._context.panel.dates[self.t]

    @property
    def n_assets(self) -> int:
        return self._context.n_assets

    def forecast(self, horizon: int = 1) -> np.ndarray:
        """
        Forecasts for days t+1 .. t+horizon, shape (horizon, n+1).

        Days past the end of the panel reuse the last available forecast.
        """
        ctx = self._context
        last = len(ctx) - 1
        rows = [min(self.t + 1 + h, last) for h in range(horizon)]
        return ctx.forecasts[rows].copy()

    def log_return_window(self, lookback: Optional[int] = None) -> np.ndarray:
        """Log returns of days t-L+1 .. t, shape (n+1, L), oldest first."""
        L = lookback or self._context.lookback
        if self.t - L + 1 < 1:
            raise InsufficientHistoryError(f"insufficient history: {L}-day window at index {self.t}")
        return self._context.log_returns[self.t - L + 1 : self.t + 1].T.copy()

    def volume_estimate(self) -> np.ndarray:
        """V̂_t."""
        return self._rolling(self._context.volume_hat)

    def volatility_estimate(self) -> np.ndarray:
        """σ̂_t."""
        return self._rolling(self._context.sigma_hat)

    def _rolling(self, series: np.ndarray) -> np.ndarray:
        row = series[self.t]
        if np.isnan(row).any():
            raise InsufficientHistoryError(
                f"insufficient history: rolling estimate undefined at index {self.t}"
            )
        return row.copy()

    def features(self) -> tuple[np.ndarray, np.ndarray]:
        """Normalised (V̂_t, σ̂_t)."""
        volume, sigma = self._context.features()
        return volume[self.t].copy(), sigma[self.t].copy()

    def risk_model(self) -> FactorRiskModel:
        return self._context.risk_model(self.t)

    def estimated_costs(self, value: float, params: CostParams) -> CostTerms:
        """Cost coefficients from V̂_t and σ̂_t."""
        return CostTerms.build(self.volatility_estimate(), self.volume_estimate(), value, params)

    def state_input(
        self,
        weights: np.ndarray,
        horizon: int,
        lookback: Optional[int] = None,
        window: bool = True,
        forecasts: bool = True,
    ) -> StateInput:
        """Policy-network observation at t with current ``weights``."""
        volume, sigma = self.features()
        return StateInput(
            weights=np.asarray(weights, dtype=float),
            volume_features=volume,
            volatility_features=sigma,
            log_return_window=self.log_return_window(lookback) if window else None,
            forecasts=self.forecast(horizon) if forecasts else None,
        )
