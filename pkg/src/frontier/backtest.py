"""
Daily rebalancing backtest.

For each test date d the strategy decides at the close of d-1, from what
is known then, the weights to hold over d. The trade is executed at that
close, charged the realised cost (σ and V of day d-1), and earns r_d:

    R^p_d = r_dᵀ(w + z) - φ(z),   v_d = v_{d-1} (1 + R^p_d)

after which the weights drift with r_d.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Union

import numpy as np
import pandas as pd

from .agent import act, drift_weights
from .costs import CostParams, PerformanceSummary, PortfolioState, realized_return, summarize
from .data import ROLLING_WINDOW, PricePanel
from .errors import BacktestError, FrontierError, InsufficientHistoryError, StrategyError
from .market import MarketContext, MarketView
from .network import PolicyNetwork
from .optimizer import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    ConstraintSet,
    InvestorPreferences,
    build_mpo,
    solve,
)

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-7

DateRange = tuple[Union[str, pd.Timestamp, int], Union[str, pd.Timestamp, int]]


class Strategy(Protocol):
    """Decides target weights from a point-in-time market view."""

    name: str

    def first_decision(self, context: MarketContext) -> int:
        """Earliest decision index this strategy can handle."""
        ...

    def decide(self, view: MarketView, state: PortfolioState) -> np.ndarray:
        """Target weights w_{t+1} (a simplex point, cash last)."""
        ...


class CashStrategy:
    """Stay 100% in cash."""

    name = "cash"

    def first_decision(self, context: MarketContext) -> int:
        return 0

    def decide(self, view: MarketView, state: PortfolioState) -> np.ndarray:
        w = np.zeros(view.n_assets)
        w[-1] = 1.0
        return w


class HoldStrategy:
    """Never trade."""

    name = "hold"

    def first_decision(self, context: MarketContext) -> int:
        return 0

    def decide(self, view: MarketView, state: PortfolioState) -> np.ndarray:
        return np.array(state.weights)


class EqualWeightStrategy:
    """Rebalance daily to 1/n in every risky asset, nothing in cash."""

    name = "ew"

    def first_decision(self, context: MarketContext) -> int:
        return 0

    def decide(self, view: MarketView, state: PortfolioState) -> np.ndarray:
        n = view.n_assets - 1
        w = np.full(view.n_assets, 1.0 / n)
        w[-1] = 0.0
        return w


def ew_strategy() -> EqualWeightStrategy:
    """The equal-weight baseline."""
    return EqualWeightStrategy()


class OptimizationStrategy:
    """
    Re-solve SPO (horizon 1) or MPO (horizon H) at every decision and
    execute the first planned trade.
    """

    def __init__(
        self,
        prefs: InvestorPreferences,
        horizon: int = 1,
        cost_params: Optional[CostParams] = None,
        cons: Optional[ConstraintSet] = None,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
    ):
        self.prefs = prefs
        self.horizon = horizon
        self.cost_params = cost_params or CostParams()
        self.cons = cons or ConstraintSet()
        self.tol = tol
        self.max_iter = max_iter
        self.unconverged = 0

    @property
    def name(self) -> str:
        return "spo" if self.horizon == 1 else "mpo"

    def first_decision(self, context: MarketContext) -> int:
        return max(context.covariance_window, ROLLING_WINDOW)

    def decide(self, view: MarketView, state: PortfolioState) -> np.ndarray:
        problem = build_mpo(
            view.forecast(self.horizon),
            state,
            view.risk_model(),
            view.estimated_costs(state.value, self.cost_params),
            self.prefs,
            self.cons,
            horizon=self.horizon,
        )
        plan = solve(problem, tol=self.tol, max_iter=self.max_iter)
        if not plan.converged:
            self.unconverged += 1
        return plan.target_weights


class PolicyStrategy:
    """Weights from a trained policy network."""

    name = "frontier"

    def __init__(self, net: PolicyNetwork):
        self.net = net

    def first_decision(self, context: MarketContext) -> int:
        context.features()
        return max(self.net.arch.lookback, ROLLING_WINDOW)

    def decide(self, view: MarketView, state: PortfolioState) -> np.ndarray:
        arch = self.net.arch
        observation = view.state_input(
            state.weights,
            horizon=arch.horizon,
            lookback=arch.lookback,
            window=arch.variant.uses_window,
            forecasts=arch.variant.uses_forecasts,
        )
        return act(self.net, observation)


@dataclass(frozen=True)
class BacktestResult:
    """
    Paths of a backtest over T test dates.

    ``weights`` are the pre-trade weights w held into each decision and
    ``trades`` the executed z, so ``weights + trades`` is what earned
    ``returns``. ``values`` has T+1 entries, starting with v_0.
    """

    strategy: str
    assets: tuple[str, ...]
    dates: pd.DatetimeIndex
    weights: np.ndarray
    trades: np.ndarray
    costs: np.ndarray
    returns: np.ndarray
    risk_free: np.ndarray
    values: np.ndarray
    summary: PerformanceSummary

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per date and asset."""
        n_dates, n_assets = self.weights.shape
        return pd.DataFrame(
            {
                "date": np.repeat(self.dates.strftime("%Y-%m-%d"), n_assets),
                "asset": np.tile(self.assets, n_dates),
                "weight": self.weights.ravel(),
                "trade": self.trades.ravel(),
                "cost": np.repeat(self.costs, n_assets),
                "return": np.repeat(self.returns, n_assets),
            }
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write ``date,asset,weight,trade,cost,return``."""
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def _resolve_index(panel: PricePanel, value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    try:
        return panel.index_of(value)
    except KeyError:
        raise BacktestError(f"date {value} is not a trading day in the panel") from None


def _check_target(strategy: str, date, target: np.ndarray, n_assets: int) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    if target.shape != (n_assets,) or not np.all(np.isfinite(target)):
        raise StrategyError(f"{strategy} returned invalid weights on {date.date()}: {target}")
    if np.any(target < -SIMPLEX_TOL) or abs(target.sum() - 1.0) > SIMPLEX_TOL:
        raise StrategyError(
            f"{strategy} returned weights off the simplex on {date.date()} "
            f"(sum {target.sum():.9f}, min {target.min():.3e})"
        )
    target = np.maximum(target, 0.0)
    return target / target.sum()


def run_backtest(
    strategy: Strategy,
    market: Union[PricePanel, MarketContext],
    date_range: DateRange,
    params: Optional[CostParams] = None,
    initial: Optional[PortfolioState] = None,
) -> BacktestResult:
    """
    Simulate ``strategy`` over the test dates in ``date_range`` (inclusive).

    Args:
        strategy: Decision rule
        market: Panel or prebuilt context (forecasts, features)
        date_range: (first, last) test date, as dates or panel indices
        params: Realised cost coefficients
        initial: Starting portfolio (default 100% cash, v_0 = 1)

    Returns:
        BacktestResult with paths and summary

    Raises:
        BacktestError: Bad range or insufficient warm-up
        StrategyError: Strategy raised or returned non-simplex weights
    """
    ctx = market if isinstance(market, MarketContext) else MarketContext.build(market)
    panel = ctx.panel
    params = params or CostParams()
    start = _resolve_index(panel, date_range[0])
    end = _resolve_index(panel, date_range[1])
    if not 1 <= start <= end < len(panel):
        raise BacktestError(f"invalid test range {start}..{end} for {len(panel)} dates")
    if end - start + 1 < 2:
        raise BacktestError("test range needs at least two dates")

    try:
        required = strategy.first_decision(ctx)
    except InsufficientHistoryError as e:
        raise BacktestError(f"insufficient warm-up for {strategy.name}: {e}") from e
    if start - 1 < required:
        raise BacktestError(
            f"insufficient warm-up for {strategy.name}: first decision index {start - 1} "
            f"precedes required {required}"
        )

    state = initial or PortfolioState.all_cash(panel.n_assets)
    if state.weights.shape != (panel.n_assets,):
        raise BacktestError(f"initial weights do not cover {panel.n_assets} assets")
    w, v = np.array(state.weights), state.value

    n_days = end - start + 1
    weights = np.empty((n_days, panel.n_assets))
    trades = np.empty_like(weights)
    costs = np.empty(n_days)
    returns = np.empty(n_days)
    values = np.empty(n_days + 1)
    values[0] = v

    for i, d in enumerate(range(start, end + 1)):
        t = d - 1
        view = ctx.view(t)
        current = PortfolioState(weights=w, value=v)
        try:
            target = strategy.decide(view, current)
        except FrontierError as e:
            raise StrategyError(f"{strategy.name} failed on {view.date.date()}: {e}") from e
        target = _check_target(strategy.name, view.date, target, panel.n_assets)

        z = target - w
        z[-1] = -z[:-1].sum()
        executed = PortfolioState(weights=w, value=v, trade=z)
        cost = ctx.realized_cost_terms(t, v, params).value(z)
        r = ctx.returns[d]
        rp = realized_return(r, executed, cost)

        weights[i], trades[i], costs[i], returns[i] = w, z, cost, rp
        v = v * (1.0 + rp)
        if not v > 0:
            raise BacktestError(f"portfolio value fell to {v} on {panel.dates[d].date()}")
        values[i + 1] = v
        w = drift_weights(w + z, r)

    risk_free = panel.risk_free[start : end + 1].copy()
    summary = summarize(returns, risk_free)
    logger.debug(
        "%s backtest %s..%s: excess return %.3g, excess risk %.3g",
        strategy.name,
        panel.dates[start].date(),
        panel.dates[end].date(),
        summary.excess_return,
        summary.excess_risk,
    )
    return BacktestResult(
        strategy=strategy.name,
        assets=panel.assets,
        dates=panel.dates[start : end + 1],
        weights=weights,
        trades=trades,
        costs=costs,
        returns=returns,
        risk_free=risk_free,
        values=values,
        summary=summary,
    )
