"""Preference-aware portfolio management: SPO/MPO optimisation and FRONTIER policies."""

__version__ = "0.1.0"

from .agent import TrainingConfig, TrainingSlice, immediate_reward, train
from .backtest import (
    BacktestResult,
    CashStrategy,
    EqualWeightStrategy,
    HoldStrategy,
    OptimizationStrategy,
    PolicyStrategy,
    run_backtest,
)
from .costs import CostParams, PerformanceSummary, PortfolioState, summarize, transaction_cost
from .data import ForecastConfig, PricePanel, ReturnsPanel, compute_returns, load_panel, write_panel
from .errors import (
    BacktestError,
    ConfigError,
    DataError,
    FrontierError,
    OptimizationError,
    StrategyError,
    SweepError,
    TrainingError,
)
from .market import MarketContext, MarketView
from .network import PolicyNetwork, Variant
from .optimizer import ConstraintSet, InvestorPreferences, build_mpo, build_spo, solve
from .risk import FactorRiskModel, fit_factor_model
from .sweep import FrontierPoint, MeanFrontier, SweepGrid, mean_frontier, pareto_filter, run_sweep
from .synthetic import MarketRegime, generate_market

__all__ = [
    "PricePanel",
    "ReturnsPanel",
    "ForecastConfig",
    "load_panel",
    "write_panel",
    "compute_returns",
    "MarketRegime",
    "generate_market",
    "CostParams",
    "PortfolioState",
    "PerformanceSummary",
    "transaction_cost",
    "summarize",
    "FactorRiskModel",
    "fit_factor_model",
    "InvestorPreferences",
    "ConstraintSet",
    "build_spo",
    "build_mpo",
    "solve",
    "PolicyNetwork",
    "Variant",
    "TrainingConfig",
    "TrainingSlice",
    "immediate_reward",
    "train",
    "MarketContext",
    "MarketView",
    "BacktestResult",
    "CashStrategy",
    "HoldStrategy",
    "EqualWeightStrategy",
    "OptimizationStrategy",
    "PolicyStrategy",
    "run_backtest",
    "FrontierPoint",
    "MeanFrontier",
    "SweepGrid",
    "pareto_filter",
    "mean_frontier",
    "run_sweep",
    "FrontierError",
    "DataError",
    "ConfigError",
    "OptimizationError",
    "TrainingError",
    "BacktestError",
    "StrategyError",
    "SweepError",
]
