"""
Transaction costs and performance measures.

Cost of a trade z (weights, cash last) on the n risky assets:

    φ(z) = Σ_i  a|z_i| + b σ_i |z_i|^{3/2} / sqrt(V_i / v) + c z_i

The cash leg never incurs cost.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CostModelError, DimensionError, InsufficientHistoryError

# Tolerances for PortfolioState invariants
WEIGHT_SUM_TOL = 1e-9
TRADE_SUM_TOL = 1e-9
NEGATIVE_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class CostParams:
    """Coefficients of the transaction-cost function."""

    a: float = 0.0005  # half-spread plus commission
    b: float = 1.0  # market-impact scale
    c: float = 0.0  # buy/sell asymmetry

    def __post_init__(self):
        if self.a < 0:
            raise CostModelError(f"cost coefficient a must be >= 0, got {self.a}")
        if self.b < 0:
            raise CostModelError(f"cost coefficient b must be >= 0, got {self.b}")

    @classmethod
    def linear(cls) -> "CostParams":
        """Spread-only costs (no market impact)."""
        return cls(a=0.0005, b=0.0, c=0.0)

    @classmethod
    def nonlinear(cls) -> "CostParams":
        """Spread plus 3/2-power market impact."""
        return cls(a=0.0005, b=1.0, c=0.0)

    @classmethod
    def preset(cls, name: str) -> "CostParams":
        presets = {"linear": cls.linear, "nonlinear": cls.nonlinear}
        if name not in presets:
            raise CostModelError(
                f"Unknown cost preset {name!r} (expected one of: {', '.join(presets)})"
            )
        return presets[name]()


@dataclass(frozen=True)
class CostTerms:
    """
    Per-asset cost coefficients for fixed σ, V and v.

    ``impact[i] = b σ_i sqrt(v / V_i)``, so the cost of a risky trade
    vector z is ``Σ a|z| + impact |z|^{3/2} + c z``.
    """

    a: float
    impact: np.ndarray
    c: float
    # Assets that cannot be traded at all (zero volume)
    frozen: np.ndarray = field(default=None)

    @classmethod
    def build(
        cls, sigma: np.ndarray, volume: np.ndarray, value: float, params: CostParams
    ) -> "CostTerms":
        sigma = np.asarray(sigma, dtype=float)
        volume = np.asarray(volume, dtype=float)
        if sigma.shape != volume.shape or sigma.ndim != 1:
            raise DimensionError(
                f"sigma {sigma.shape} and volume {volume.shape} must be equal-length vectors"
            )
        if not value > 0:
            raise CostModelError(f"portfolio value must be positive, got {value}")
        if np.any(volume < 0):
            raise CostModelError("traded volume must be non-negative")
        zero = volume == 0
        with np.errstate(divide="ignore"):
            scale = np.where(zero, 0.0, np.sqrt(value / np.where(zero, 1.0, volume)))
        impact = params.b * sigma * scale
        return cls(a=params.a, impact=impact, c=params.c, frozen=zero)

    @property
    def n_risky(self) -> int:
        return len(self.impact)

    def _risky(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape == (self.n_risky + 1,):
            return z[:-1]
        if z.shape == (self.n_risky,):
            return z
        raise DimensionError(
            f"trade vector has shape {z.shape}, expected ({self.n_risky},) or ({self.n_risky + 1},)"
        )

    def value(self, z: np.ndarray) -> float:
        """Cost φ(z)."""
        zr = self._risky(z)
        if self.frozen is not None and np.any(self.frozen & (zr != 0)):
            i = int(np.flatnonzero(self.frozen & (zr != 0))[0])
            raise CostModelError(f"zero volume with nonzero trade on asset {i}")
        mag = np.abs(zr)
        return float(np.sum(self.a * mag + self.impact * mag**1.5 + self.c * zr))

    def smooth_value(self, z: np.ndarray, smoothing: float = 0.0) -> float:
        """The impact and asymmetry terms only; |z|^{3/2} optionally smoothed."""
        zr = self._risky(z)
        return float(np.sum(self.impact * _power(zr, smoothing) + self.c * zr))

    def gradient(self, z: np.ndarray, smoothing: float = 0.0) -> np.ndarray:
        """
        Gradient of ``smooth_value`` with respect to z (same shape as z).

        Args:
            z: Trade vector, risky-only or with the cash leg last
            smoothing: δ in (z² + δ)^{3/4}; 0 uses the exact 1.5|z|^{1/2} sign(z)
        """
        z = np.asarray(z, dtype=float)
        zr = self._risky(z)
        grad = self.impact * _power_derivative(zr, smoothing) + self.c
        if z.shape[0] == self.n_risky + 1:
            return np.append(grad, 0.0)
        return grad


def _power(z: np.ndarray, smoothing: float) -> np.ndarray:
    if smoothing > 0:
        return (z * z + smoothing) ** 0.75
    return np.abs(z) ** 1.5


def _power_derivative(z: np.ndarray, smoothing: float) -> np.ndarray:
    if smoothing > 0:
        return 1.5 * z * (z * z + smoothing) ** -0.25
    return 1.5 * np.sqrt(np.abs(z)) * np.sign(z)


def transaction_cost(
    z: np.ndarray,
    sigma: np.ndarray,
    volume: np.ndarray,
    v: float,
    params: CostParams,
) -> float:
    """
    Cost of trade ``z`` as a fraction of portfolio value.

    Args:
        z: Trade vector (risky assets, optionally followed by the cash leg)
        sigma: Per-asset volatility proxy
        volume: Per-asset traded volume (currency)
        v: Portfolio value (currency)
        params: Cost coefficients

    Raises:
        CostModelError: Zero volume with a nonzero trade, or v <= 0
        DimensionError: Vector lengths disagree
    """
    return CostTerms.build(sigma, volume, v, params).value(z)


def transaction_cost_gradient(
    z: np.ndarray,
    sigma: np.ndarray,
    volume: np.ndarray,
    v: float,
    params: CostParams,
    smoothing: float = 0.0,
) -> np.ndarray:
    """Gradient of the differentiable part of the cost (impact and c terms)."""
    return CostTerms.build(sigma, volume, v, params).gradient(z, smoothing)


@dataclass(frozen=True)
class PortfolioState:
    """Weights (cash last), value and the trade applied on top of the weights."""

    weights: np.ndarray
    value: float = 1.0
    trade: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        z = np.zeros_like(w) if self.trade is None else np.array(self.trade, dtype=float)
        if w.ndim != 1 or z.shape != w.shape:
            raise DimensionError(f"weights {w.shape} and trade {z.shape} must be equal-length vectors")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {w.sum():.12f}")
        if np.any(w < -NEGATIVE_WEIGHT_TOL):
            raise ValueError(f"weights must be non-negative, got min {w.min():.3e}")
        if abs(z.sum()) > TRADE_SUM_TOL:
            raise ValueError(f"trade must sum to 0, got {z.sum():.3e}")
        if not self.value > 0:
            raise CostModelError(f"portfolio value must be positive, got {self.value}")
        w.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "trade", z)

    @classmethod
    def all_cash(cls, n_assets: int, value: float = 1.0) -> "PortfolioState":
        """100% cash with ``n_assets`` slots (cash last)."""
        w = np.zeros(n_assets)
        w[-1] = 1.0
        return cls(weights=w, value=value)

    @property
    def post_trade(self) -> np.ndarray:
        return self.weights + self.trade


def realized_return(r: np.ndarray, state: PortfolioState, cost: float) -> float:
    """
    Realised return after costs: rᵀw + rᵀz - φ.

    Raises:
        DimensionError: ``r`` does not have one entry per asset
    """
    r = np.asarray(r, dtype=float)
    if r.shape != state.weights.shape:
        raise DimensionError(f"returns {r.shape} do not match weights {state.weights.shape}")
    return float(r @ state.weights + r @ state.trade - cost)


@dataclass(frozen=True)
class PerformanceSummary:
    """Daily-frequency performance statistics. ``sharpe`` is None when undefined."""

    mean_return: float
    volatility: float
    excess_return: float
    excess_risk: float
    sharpe: Optional[float]
    n_days: int

    def to_dict(self) -> dict:
        return {
            "mean_return": self.mean_return,
            "volatility": self.volatility,
            "excess_return": self.excess_return,
            "excess_risk": self.excess_risk,
            "sharpe": self.sharpe,
            "n_days": self.n_days,
        }


def _population_std(x: np.ndarray, mean: float) -> float:
    # Exactly zero for constant series (no rounding residue from the mean)
    if np.ptp(x) == 0:
        return 0.0
    return float(np.sqrt(np.mean((x - mean) ** 2)))


def summarize(returns: np.ndarray, risk_free: np.ndarray) -> PerformanceSummary:
    """
    Population (1/T) statistics of a daily return series.

    Args:
        returns: Realised portfolio returns R^p
        risk_free: Risk-free returns on the same dates

    Raises:
        DimensionError: Lengths differ
        InsufficientHistoryError: Fewer than two days
    """
    rp = np.asarray(returns, dtype=float)
    rf = np.asarray(risk_free, dtype=float)
    if rp.shape != rf.shape or rp.ndim != 1:
        raise DimensionError(f"returns {rp.shape} and risk_free {rf.shape} must be equal-length")
    if len(rp) < 2:
        raise InsufficientHistoryError(f"summarize needs at least 2 days, got {len(rp)}")

    excess = rp - rf
    mean_p = float(np.mean(rp))
    mean_e = float(np.mean(excess))
    risk_e = _population_std(excess, mean_e)
    return PerformanceSummary(
        mean_return=mean_p,
        volatility=_population_std(rp, mean_p),
        excess_return=mean_e,
        excess_risk=risk_e,
        sharpe=mean_e / risk_e if risk_e > 0 else None,
        n_days=len(rp),
    )
