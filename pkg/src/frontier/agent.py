"""
Preference-aware policy-gradient agent.

The agent replays 30-day episodes from the training slice. At every step
the network maps the observed state to target weights, the step reward is

    R = rᵀw_{t+1} - γ_trade φ(w_{t+1} - w_t) - γ_risk ψ(w_{t+1})

and the weights then drift with the day's returns. Training ascends the
mean discounted return of an episode, J = (1/T) Σ_t G_t, with its exact
gradient through the network, the reward and the weight drift
(backpropagation through the whole episode).
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .costs import CostParams, CostTerms
from .errors import DimensionError, InsufficientHistoryError, TrainingError
from .market import MarketContext
from .network import ForwardCache, PolicyNetwork, StateInput
from .optimizer import InvestorPreferences
from .risk import FactorRiskModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for ``train``."""

    episodes: int = 5000
    episode_length: int = 30
    gamma: float = 0.99
    learning_rate: float = 1e-3
    clip_norm: float = 10.0
    init_scale: float = 0.05
    cost_smoothing: float = 1e-12
    portfolio_value: float = 1.0
    log_every: int = 500

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError(f"episodes must be >= 0, got {self.episodes}")
        if self.episode_length < 1:
            raise ValueError(f"episode_length must be >= 1, got {self.episode_length}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        if self.portfolio_value <= 0:
            raise ValueError(f"portfolio_value must be positive, got {self.portfolio_value}")


@dataclass(frozen=True)
class TrainingSlice:
    """Training days ``start`` .. ``end`` (panel indices) of a market context."""

    context: MarketContext
    start: int
    end: int
    cost_params: CostParams = CostParams()

    def decision_range(self, episode_length: int, lookback: int) -> tuple[int, int]:
        """Inclusive range of valid episode start indices."""
        lo = max(self.start, lookback)
        hi = self.end - episode_length
        if hi < lo:
            raise InsufficientHistoryError(
                f"insufficient history: training slice {self.start}..{self.end} is too "
                f"short for a {episode_length}-day episode"
            )
        return lo, hi


@dataclass
class Episode:
    """One replayed episode with its rewards and discounted returns."""

    start: int
    length: int
    rewards: np.ndarray  # R_1 .. R_T
    discounted: np.ndarray  # G_0 .. G_T
    weights: np.ndarray  # (T, n+1) target weights chosen
    gamma: float = 0.99

    @property
    def objective(self) -> float:
        """J = mean of G_0 .. G_{T-1}."""
        return float(np.mean(self.discounted[:-1]))


def discounted_returns(rewards, gamma: float = 0.99) -> np.ndarray:
    """
    G_t = Σ_{k=t+1}^T γ^{k-t-1} R_k for t = 0 .. T, so G_T = 0.

    Args:
        rewards: R_1 .. R_T
        gamma: Discount rate

    Returns:
        Array of length T+1
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 1 or len(rewards) == 0:
        raise ValueError("rewards must be a non-empty sequence")
    out = np.zeros(len(rewards) + 1)
    for t in range(len(rewards) - 1, -1, -1):
        out[t] = rewards[t] + gamma * out[t + 1]
    return out


def _reward_weights(length: int, gamma: float) -> np.ndarray:
    """dJ/dR_k for k = 1 .. T."""
    coeffs = np.empty(length)
    acc = 0.0
    for k in range(length):
        acc = acc * gamma + 1.0
        coeffs[k] = acc / length
    return coeffs


def _reward_terms(
    r: np.ndarray,
    w_next: np.ndarray,
    w_curr: np.ndarray,
    risk: FactorRiskModel,
    costs: CostTerms,
    prefs: InvestorPreferences,
    smoothing: float = 0.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Reward with its gradients w.r.t. ``w_next`` and ``w_curr``."""
    z = w_next - w_curr
    zr = z[:-1]
    if smoothing > 0:
        cost = costs.a * float(np.sum(np.abs(zr))) + costs.smooth_value(z, smoothing)
    else:
        cost = costs.value(z)
    reward = float(r @ w_next) - prefs.gamma_trade * cost - prefs.gamma_risk * risk.risk(w_next)

    d_cost = costs.gradient(z, smoothing)
    d_cost[:-1] += costs.a * np.sign(zr)
    d_next = r - prefs.gamma_trade * d_cost - prefs.gamma_risk * risk.risk_gradient(w_next)
    d_curr = prefs.gamma_trade * d_cost
    return reward, d_next, d_curr


def immediate_reward(
    r: np.ndarray,
    w_next: np.ndarray,
    w_curr: np.ndarray,
    risk: FactorRiskModel,
    costs: CostTerms,
    prefs: InvestorPreferences,
) -> float:
    """
    Step reward rᵀw_{t+1} - γ_trade φ(w_{t+1} - w_t) - γ_risk ψ(w_{t+1}).

    Args:
        r: Realised returns of the step (n+1, cash last)
        w_next: Weights chosen for the step
        w_curr: Weights held before trading
        risk: Risk model
        costs: Realised cost coefficients
        prefs: Investor preferences

    Raises:
        DimensionError: Vector lengths disagree
        CostModelError: As ``transaction_cost``
    """
    r, w_next, w_curr = (np.asarray(v, dtype=float) for v in (r, w_next, w_curr))
    if not (r.shape == w_next.shape == w_curr.shape == (risk.dimension,)):
        raise DimensionError(
            f"returns {r.shape}, w_next {w_next.shape} and w_curr {w_curr.shape} "
            f"must all have length {risk.dimension}"
        )
    return _reward_terms(r, w_next, w_curr, risk, costs, prefs)[0]


def drift_weights(weights: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Weights after one day of returns: w∘(1+r) / (1 + rᵀw)."""
    grown = weights * (1.0 + r)
    return grown / grown.sum()


def _drift_backward(weights: np.ndarray, r: np.ndarray, grad: np.ndarray) -> np.ndarray:
    growth = 1.0 + r
    total = float(weights @ growth)
    return growth * grad / total - growth * float(grad @ (weights * growth)) / total**2


def act(net: PolicyNetwork, state: StateInput) -> np.ndarray:
    """Weights the trained policy picks for ``state``."""
    return net.forward(state)


class _Rollout:
    """Forward record of one episode, enough for the reverse pass."""

    def __init__(self):
        self.caches: list[ForwardCache] = []
        self.returns: list[np.ndarray] = []
        self.d_next: list[np.ndarray] = []
        self.d_curr: list[np.ndarray] = []
        self.rewards: list[float] = []


def _rollout(
    net: PolicyNetwork,
    data: TrainingSlice,
    start: int,
    prefs: InvestorPreferences,
    cfg: TrainingConfig,
    risk: FactorRiskModel,
) -> _Rollout:
    ctx = data.context
    arch = net.arch
    w = np.zeros(arch.n_assets)
    w[-1] = 1.0
    record = _Rollout()
    for t in range(start, start + cfg.episode_length):
        state = ctx.view(t).state_input(
            w,
            horizon=arch.horizon,
            lookback=arch.lookback,
            window=arch.variant.uses_window,
            forecasts=arch.variant.uses_forecasts,
        )
        cache = net.forward_cached(state)
        x = cache.out
        r = ctx.returns[t + 1]
        costs = ctx.realized_cost_terms(t, cfg.portfolio_value, data.cost_params)
        reward, d_next, d_curr = _reward_terms(
            r, x, w, risk, costs, prefs, smoothing=cfg.cost_smoothing
        )
        record.caches.append(cache)
        record.returns.append(r)
        record.d_next.append(d_next)
        record.d_curr.append(d_curr)
        record.rewards.append(reward)
        w = drift_weights(x, r)
    return record


def episode_gradient(
    net: PolicyNetwork,
    data: TrainingSlice,
    start: int,
    prefs: InvestorPreferences,
    cfg: TrainingConfig,
    risk: Optional[FactorRiskModel] = None,
) -> tuple[Episode, np.ndarray]:
    """
    Replay the episode starting at ``start`` and return it with dJ/dθ.
    """
    if risk is None:
        risk = data.context.fit_risk_model(data.start, data.end)
    record = _rollout(net, data, start, prefs, cfg, risk)
    rewards = np.array(record.rewards)
    coeffs = _reward_weights(cfg.episode_length, cfg.gamma)

    grad = np.zeros_like(net.params)
    g_carry = np.zeros(net.arch.n_assets)  # dJ/d(pre-trade weights of the next step)
    for s in range(cfg.episode_length - 1, -1, -1):
        x = record.caches[s].out
        gx = coeffs[s] * record.d_next[s] + _drift_backward(x, record.returns[s], g_carry)
        g_params, g_input = net.backward(record.caches[s], gx)
        grad += g_params
        g_carry = g_input + coeffs[s] * record.d_curr[s]

    episode = Episode(
        start=start,
        length=cfg.episode_length,
        rewards=rewards,
        discounted=discounted_returns(rewards, cfg.gamma),
        weights=np.array([c.out for c in record.caches]),
        gamma=cfg.gamma,
    )
    return episode, grad


def episode_objective(
    net: PolicyNetwork,
    data: TrainingSlice,
    start: int,
    prefs: InvestorPreferences,
    cfg: TrainingConfig,
    risk: Optional[FactorRiskModel] = None,
) -> float:
    """J of the episode starting at ``start`` (no gradient)."""
    if risk is None:
        risk = data.context.fit_risk_model(data.start, data.end)
    record = _rollout(net, data, start, prefs, cfg, risk)
    return float(np.mean(discounted_returns(record.rewards, cfg.gamma)[:-1]))


def train(
    net: PolicyNetwork,
    data: TrainingSlice,
    prefs: InvestorPreferences,
    cfg: TrainingConfig,
    rng: np.random.Generator,
) -> PolicyNetwork:
    """
    Train a copy of ``net`` by gradient ascent on episode objectives.

    Args:
        net: Initial network (left unchanged)
        data: Training slice; needs lookback and rolling warm-up before
            the first episode start
        prefs: Investor preferences baked into the reward
        cfg: Hyperparameters
        rng: Drives episode start sampling

    Returns:
        Trained network

    Raises:
        InsufficientHistoryError: Slice too short for one episode
        TrainingError: Objective or gradient became non-finite
    """
    trained = net.copy()
    if cfg.episodes == 0:
        return trained

    lo, hi = data.decision_range(cfg.episode_length, net.arch.lookback)
    data.context.features()
    risk = data.context.fit_risk_model(data.start, data.end)

    for episode_index in range(cfg.episodes):
        start = int(rng.integers(lo, hi + 1))
        episode, grad = episode_gradient(trained, data, start, prefs, cfg, risk)
        objective = episode.objective
        norm = float(np.linalg.norm(grad))
        if not (np.isfinite(objective) and np.isfinite(norm)):
            raise TrainingError(
                f"non-finite objective or gradient in episode {episode_index} "
                f"(start index {start}, prefs {prefs.as_tuple()})"
            )
        if norm > cfg.clip_norm:
            grad *= cfg.clip_norm / norm
        trained.params += cfg.learning_rate * grad
        if not np.all(np.isfinite(trained.params)):
            raise TrainingError(f"parameters became non-finite in episode {episode_index}")

        if cfg.log_every and (episode_index + 1) % cfg.log_every == 0:
            logger.debug(
                "Episode %d/%d: J=%.6g |grad|=%.3g", episode_index + 1, cfg.episodes, objective, norm
            )

    logger.info("Trained %s policy for %d episodes", net.variant.value, cfg.episodes)
    return trained
