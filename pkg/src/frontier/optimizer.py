"""
Single- and multi-period mean-variance portfolio optimisation.

Both programs maximise, over post-trade weights x_τ = w_τ + z_τ on the
probability simplex,

    Σ_τ  r̂_τᵀ x_τ - γ_trade φ̂(z_τ) - γ_risk ψ(x_τ)

with w_{τ+1} = w_τ + z_τ. SPO is the H=1 case. Only the first trade of
a plan is ever executed.

The solver is proximal projected gradient ascent on the stacked weights
X (H × (n+1)) with Barzilai-Borwein steps and monotone backtracking:

- first period: the a|z| spread term is applied through an exact proximal
  step on the simplex (soft-thresholding around the current weights);
- later periods: a|z| is Huber-smoothed with width ``huber_width``;
- the 3/2-power impact term, the c term and ψ enter through gradients.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .costs import CostTerms, PortfolioState
from .errors import CostModelError, DimensionError, InfeasibleProblemError, OptimizationError
from .risk import FactorRiskModel

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000
HUBER_WIDTH = 1e-5
FEASIBILITY_TOL = 1e-7

# Step-size safeguards
MIN_STEP = 1e-14
MAX_STEP = 1e12


@dataclass(frozen=True)
class InvestorPreferences:
    """Risk and trade aversion multipliers (γ_risk, γ_trade)."""

    gamma_risk: float
    gamma_trade: float

    def __post_init__(self):
        for name in ("gamma_risk", "gamma_trade"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite value >= 0, got {value}")

    def as_tuple(self) -> tuple[float, float]:
        return (self.gamma_risk, self.gamma_trade)


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible-set flags. Only the all-enabled profile is solvable."""

    long_only: bool = True
    fully_invested: bool = True
    self_financing: bool = True

    def validate(self) -> None:
        """
        Raises:
            OptimizationError: A constraint is disabled (shorting or leverage
                would be required, neither of which is supported)
        """
        disabled = [
            name
            for name in ("long_only", "fully_invested", "self_financing")
            if not getattr(self, name)
        ]
        if disabled:
            raise OptimizationError(
                f"unsupported constraint combination: {', '.join(disabled)} disabled"
            )


@dataclass(frozen=True)
class TradePlan:
    """Result of a solve: H trades, their implied weights and solver diagnostics."""

    trades: np.ndarray  # (H, n+1)
    weights: np.ndarray  # (H, n+1) post-trade weights
    objective_value: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def first_trade(self) -> np.ndarray:
        """The trade that gets executed."""
        return self.trades[0]

    @property
    def target_weights(self) -> np.ndarray:
        return self.weights[0]


@dataclass(frozen=True)
class PortfolioProblem:
    """An SPO (H=1) or MPO instance, ready for ``solve``."""

    forecasts: np.ndarray  # (H, n+1)
    weights: np.ndarray  # current w_t
    risk: FactorRiskModel
    costs: CostTerms
    prefs: InvestorPreferences
    cons: ConstraintSet = ConstraintSet()
    huber_width: float = HUBER_WIDTH

    @property
    def horizon(self) -> int:
        return self.forecasts.shape[0]

    @property
    def n_assets(self) -> int:
        return self.forecasts.shape[1]

    # --- Objective pieces ---

    def _trades(self, x: np.ndarray) -> np.ndarray:
        prev = np.vstack([self.weights, x[:-1]])
        return x - prev

    def _proportional_weights(self) -> np.ndarray:
        """Per-coordinate prox threshold scale γ_trade·a (cash 0)."""
        lam = np.full(self.n_assets, self.prefs.gamma_trade * self.costs.a)
        lam[-1] = 0.0
        return lam

    def smooth_value(self, x: np.ndarray) -> float:
        """Objective minus the first-period spread term."""
        z = self._trades(x)
        g_risk, g_trade = self.prefs.gamma_risk, self.prefs.gamma_trade
        total = float(np.sum(self.forecasts * x))
        for tau in range(self.horizon):
            total -= g_risk * self.risk.risk(x[tau])
            total -= g_trade * self.costs.smooth_value(z[tau])
            if tau > 0:
                total -= g_trade * self.costs.a * float(
                    np.sum(_huber(z[tau, :-1], self.huber_width))
                )
        return total

    def smooth_gradient(self, x: np.ndarray) -> np.ndarray:
        z = self._trades(x)
        g_risk, g_trade = self.prefs.gamma_risk, self.prefs.gamma_trade
        # d(cost)/dz for every period, cash column zero
        dz = np.zeros_like(z)
        for tau in range(self.horizon):
            dz[tau] = self.costs.gradient(z[tau])
            if tau > 0:
                dz[tau, :-1] += self.costs.a * _huber_derivative(z[tau, :-1], self.huber_width)
        # z_τ = x_τ - x_{τ-1}: x_τ receives +dz_τ and -dz_{τ+1}
        dx = dz.copy()
        dx[:-1] -= dz[1:]
        return self.forecasts - g_risk * self.risk.risk_gradient(x) - g_trade * dx

    def nonsmooth_value(self, x: np.ndarray) -> float:
        z0 = x[0] - self.weights
        return float(np.sum(self._proportional_weights() * np.abs(z0)))

    def objective(self, x: np.ndarray) -> float:
        """Objective value at stacked post-trade weights ``x`` (H × (n+1))."""
        x = np.asarray(x, dtype=float).reshape(self.horizon, self.n_assets)
        return self.smooth_value(x) - self.nonsmooth_value(x)

    def prox(self, y: np.ndarray, step: float) -> np.ndarray:
        """Project each period onto the simplex, first period with the spread prox."""
        out = np.empty_like(y)
        out[0] = prox_spread_simplex(y[0], self.weights, step * self._proportional_weights())
        for tau in range(1, self.horizon):
            out[tau] = project_simplex(y[tau])
        return out


def _huber(d: np.ndarray, width: float) -> np.ndarray:
    mag = np.abs(d)
    return np.where(mag <= width, d * d / (2 * width), mag - width / 2)


def _huber_derivative(d: np.ndarray, width: float) -> np.ndarray:
    return np.clip(d / width, -1.0, 1.0)


# --- Projections ---


def project_simplex(y: np.ndarray) -> np.ndarray:
    """
    Euclidean projection onto {x >= 0, Σx = 1} by sorting.
    """
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(y) + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(y - theta, 0.0)


def prox_spread_simplex(y: np.ndarray, w: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """
    argmin_x ½‖x - y‖² + Σ λ_i |x_i - w_i|  subject to x on the simplex.

    Each coordinate is x_i(θ) = max(0, w_i + soft(y_i - θ - w_i, λ_i)); the
    multiplier θ making Σx = 1 is found exactly from the piecewise-linear
    breakpoints of Σx_i(θ).
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if not np.any(lam > 0):
        return project_simplex(y)

    def coords(theta: float) -> np.ndarray:
        u = y - theta - w
        soft = np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)
        return np.maximum(0.0, w + soft)

    breaks = np.unique(np.concatenate([y - w - lam, y - w + lam, y + lam]))
    sums = np.array([coords(b).sum() for b in breaks])

    if sums[0] < 1.0:
        # Below every breakpoint all coordinates are on their rising branch
        theta = breaks[0] - (1.0 - sums[0]) / len(y)
        return coords(theta)

    # sums is non-increasing; find the segment containing 1
    j = int(np.searchsorted(-sums, -1.0, side="right")) - 1
    j = min(max(j, 0), len(breaks) - 2)
    s0, s1 = sums[j], sums[j + 1]
    if s0 == s1:
        theta = breaks[j]
    else:
        theta = breaks[j] + (s0 - 1.0) * (breaks[j + 1] - breaks[j]) / (s0 - s1)
    return coords(theta)


# --- Problem construction ---


def _weights_of(state: Union[PortfolioState, np.ndarray]) -> np.ndarray:
    if isinstance(state, PortfolioState):
        return np.asarray(state.weights, dtype=float)
    return np.asarray(state, dtype=float)


def build_mpo(
    forecasts: np.ndarray,
    state: Union[PortfolioState, np.ndarray],
    risk: FactorRiskModel,
    costs: CostTerms,
    prefs: InvestorPreferences,
    cons: Optional[ConstraintSet] = None,
    horizon: Optional[int] = None,
    huber_width: float = HUBER_WIDTH,
) -> PortfolioProblem:
    """
    Build a multi-period problem over ``horizon`` periods.

    Args:
        forecasts: r̂ for each period, shape (H, n+1), cash last
        state: Current portfolio (or its weight vector)
        risk: Factor risk model of dimension n+1
        costs: Estimated cost coefficients (from V̂ and σ̂)
        prefs: Investor preferences
        cons: Constraint flags (default all enabled)
        horizon: H; defaults to the number of forecast rows
        huber_width: Smoothing width for spread costs of planned trades

    Raises:
        DimensionError: Inputs disagree on n+1 or on H
        InfeasibleProblemError: Current weights are off the simplex
        OptimizationError: Non-finite forecasts or unsupported constraints
    """
    cons = cons or ConstraintSet()
    cons.validate()

    r_hat = np.atleast_2d(np.asarray(forecasts, dtype=float))
    H = r_hat.shape[0] if horizon is None else horizon
    if H < 1:
        raise ValueError(f"horizon must be >= 1, got {H}")
    if r_hat.shape[0] < H:
        raise DimensionError(f"{r_hat.shape[0]} forecast rows for horizon {H}")
    r_hat = r_hat[:H]

    w = _weights_of(state)
    m = r_hat.shape[1]
    if w.shape != (m,):
        raise DimensionError(f"weights {w.shape} do not match forecasts with {m} assets")
    if risk.dimension != m:
        raise DimensionError(f"risk model dimension {risk.dimension} does not match {m} assets")
    if costs.n_risky != m - 1:
        raise DimensionError(f"cost inputs cover {costs.n_risky} risky assets, expected {m - 1}")
    if not np.all(np.isfinite(r_hat)):
        raise OptimizationError("forecasts contain non-finite values")
    if abs(w.sum() - 1.0) > FEASIBILITY_TOL or np.any(w < -FEASIBILITY_TOL):
        raise InfeasibleProblemError(
            f"current weights are off the simplex (sum {w.sum():.9f}, min {w.min():.3e})"
        )
    if costs.frozen is not None and np.any(costs.frozen):
        raise CostModelError(
            f"zero estimated volume for asset(s) {np.flatnonzero(costs.frozen).tolist()}"
        )

    return PortfolioProblem(
        forecasts=r_hat,
        weights=w,
        risk=risk,
        costs=costs,
        prefs=prefs,
        cons=cons,
        huber_width=huber_width,
    )


def build_spo(
    forecast: np.ndarray,
    state: Union[PortfolioState, np.ndarray],
    risk: FactorRiskModel,
    costs: CostTerms,
    prefs: InvestorPreferences,
    cons: Optional[ConstraintSet] = None,
) -> PortfolioProblem:
    """
    Build a single-period problem: max r̂ᵀ(w+z) - γ_trade φ̂(z) - γ_risk ψ(w+z).

    Args:
        forecast: r̂_t, length n+1, cash last

    Raises:
        As ``build_mpo``.
    """
    forecast = np.asarray(forecast, dtype=float)
    if forecast.ndim != 1:
        raise DimensionError(f"SPO takes a single forecast vector, got shape {forecast.shape}")
    return build_mpo(forecast[None, :], state, risk, costs, prefs, cons, horizon=1)


# --- Solver ---


def solve(
    problem: PortfolioProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> TradePlan:
    """
    Maximise the problem objective.

    Starts from holding (every period at the current weights). Each
    iteration takes a proximal gradient step whose size is chosen by a
    Barzilai-Borwein guess and halved until the sufficient-increase test
    passes, so the objective never decreases.

    Args:
        problem: Instance from ``build_spo`` / ``build_mpo``
        tol: Stop when the gradient-mapping norm falls to or below this
        max_iter: Iteration cap; reaching it returns ``converged=False``,
            as does a line search that cannot make progress

    Returns:
        TradePlan with trades, weights, final objective and history

    Raises:
        OptimizationError: The objective or its gradient is non-finite
    """
    H, m = problem.horizon, problem.n_assets
    x = np.tile(problem.weights, (H, 1))
    f = problem.smooth_value(x)
    g = problem.smooth_gradient(x)
    value = f - problem.nonsmooth_value(x)
    if not (np.isfinite(value) and np.all(np.isfinite(g))):
        raise OptimizationError("objective is not finite at the starting point")

    history = [value]
    step = 1.0 / max(1.0, float(np.max(np.abs(g))))
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        while True:
            x_new = problem.prox(x + step * g, step)
            d = x_new - x
            f_new = problem.smooth_value(x_new)
            if not np.isfinite(f_new):
                raise OptimizationError("objective became non-finite during solve")
            # f is concave: accept when the quadratic minorant holds
            if f_new >= f + float(np.sum(g * d)) - float(np.sum(d * d)) / (2 * step) - 1e-15:
                break
            step *= 0.5
            if step < MIN_STEP:
                break

        residual = float(np.linalg.norm(d)) / step
        value_new = f_new - problem.nonsmooth_value(x_new)
        if value_new < value:
            # Rounding-level decrease: x is kept
            if _stalled_at_optimum(problem, x, g, value, value_new, tol):
                converged = True
                break
            if step < MIN_STEP:
                logger.debug("Line search failed at iteration %d", iterations)
                break
            step *= 0.5
            continue

        g_new = problem.smooth_gradient(x_new)
        if not np.all(np.isfinite(g_new)):
            raise OptimizationError("gradient became non-finite during solve")

        x, f, value = x_new, f_new, value_new
        history.append(value)
        if residual <= tol:
            converged = True
            break

        # Barzilai-Borwein step for the next iteration (ascent on concave f)
        s = d.ravel()
        yk = (g - g_new).ravel()
        sy = float(s @ yk)
        step = float(s @ s) / sy if sy > 0 else step * 2.0
        step = min(max(step, MIN_STEP), MAX_STEP)
        g = g_new

    if not converged:
        logger.warning(
            "Solver stopped after %d iterations without converging (objective %.6g)",
            iterations,
            value,
        )
    else:
        logger.debug("Solver converged in %d iterations (objective %.6g)", iterations, value)

    x = _clean_simplex_rows(x)
    trades = x - np.vstack([problem.weights, x[:-1]])
    return TradePlan(
        trades=trades,
        weights=x,
        objective_value=problem.objective(x),
        iterations=iterations,
        converged=converged,
        history=tuple(history),
    )


def _stalled_at_optimum(
    problem: PortfolioProblem,
    x: np.ndarray,
    g: np.ndarray,
    value: float,
    value_new: float,
    tol: float,
) -> bool:
    """True when a failed ascent step is round-off at a stationary point."""
    if abs(value_new - value) <= np.finfo(float).eps * max(1.0, abs(value)):
        return True
    unit_residual = float(np.linalg.norm(problem.prox(x + g, 1.0) - x))
    return unit_residual <= tol


def _clean_simplex_rows(x: np.ndarray) -> np.ndarray:
    """Clip round-off negatives and renormalise each row to sum 1."""
    x = np.maximum(x, 0.0)
    return x / x.sum(axis=1, keepdims=True)
