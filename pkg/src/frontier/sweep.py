"""
Investor-preference sweeps, Pareto frontiers and mean frontiers.

A sweep runs one strategy family over every (γ_risk, γ_trade) pair of a
grid and every seed, backtests each on the test range and records its
excess risk and return. FRONTIER families retrain per (pair, seed); SPO
and MPO only re-solve with forecasts drawn from the seed; EW ignores
both and runs once.
"""

import asyncio
import logging
from collections import defaultdict
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy import stats

from .agent import TrainingConfig, TrainingSlice, train
from .backtest import (
    EqualWeightStrategy,
    OptimizationStrategy,
    PolicyStrategy,
    run_backtest,
)
from .costs import CostParams
from .errors import DisjointSupportError, FrontierError, SweepError
from .market import MarketContext
from .network import CONV_WIDTH, LOOKBACK, PolicyNetwork, Variant
from .optimizer import DEFAULT_MAX_ITER, DEFAULT_TOL, InvestorPreferences

logger = logging.getLogger(__name__)

RISK_AVERSION_GRID = (
    0.1, 0.178, 0.316, 0.562, 1, 2, 3, 6, 10, 18, 32, 56,
    100, 178, 316, 562, 1000, 2000, 5000, 10000, 20000
)
TRADE_AVERSION_GRID = (
    0.1, 0.5, 1, 2, 3, 4, 5, 5.5, 6, 6.5, 7, 7.5,
    8, 9, 10, 11, 12, 15, 20, 30, 45, 60, 100, 200
)

FAMILIES = (
    "ew",
    "spo",
    "mpo",
    "frontier-log-returns",
    "frontier-forecast-only",
    "frontier-all-inputs",
)
FRONTIER_PREFIX = "frontier-"

MEAN_GRID_POINTS = 100
CONFIDENCE = 0.95

POINT_COLUMNS = [
    "family",
    "variant",
    "gamma_risk",
    "gamma_trade",
    "seed",
    "excess_risk",
    "excess_return",
    "sharpe",
]
MEAN_COLUMNS = ["family", "grid_risk", "mean_return", "ci_low", "ci_high"]


def parse_family(name: str) -> tuple[str, str]:
    """
    Split a family name into (family, variant).

    Raises:
        ValueError: Unknown family
    """
    if name not in FAMILIES:
        raise ValueError(f"Unknown strategy family {name!r} (expected one of: {', '.join(FAMILIES)})")
    if name.startswith(FRONTIER_PREFIX):
        return "frontier", name[len(FRONTIER_PREFIX) :]
    return name, ""


def family_name(family: str, variant: str) -> str:
    return f"{family}-{variant}" if variant else family


@dataclass(frozen=True)
class SweepGrid:
    """Cross product of risk- and trade-aversion values."""

    risk_values: tuple[float, ...] = RISK_AVERSION_GRID
    trade_values: tuple[float, ...] = TRADE_AVERSION_GRID

    @classmethod
    def full(cls) -> "SweepGrid":
        """All 21 × 24 = 504 pairs."""
        return cls()

    @classmethod
    def small(cls) -> "SweepGrid":
        """3 × 3 subset spanning the full grid."""
        return cls(risk_values=(1, 100, 20000), trade_values=(1, 10, 100))

    @classmethod
    def named(cls, name: str) -> "SweepGrid":
        grids = {"full": cls.full, "small": cls.small}
        if name not in grids:
            raise ValueError(f"Unknown grid {name!r} (expected full or small)")
        return grids[name]()

    def subset(
        self,
        risk_values: Optional[Iterable[float]] = None,
        trade_values: Optional[Iterable[float]] = None,
    ) -> "SweepGrid":
        """Grid restricted to the given values (each must be in this grid)."""
        risk = tuple(self.risk_values if risk_values is None else risk_values)
        trade = tuple(self.trade_values if trade_values is None else trade_values)
        missing = [v for v in risk if v not in self.risk_values]
        missing += [v for v in trade if v not in self.trade_values]
        if missing:
            raise ValueError(f"values not in grid: {missing}")
        return SweepGrid(risk_values=risk, trade_values=trade)

    @property
    def pairs(self) -> list[InvestorPreferences]:
        return [
            InvestorPreferences(gamma_risk=float(gr), gamma_trade=float(gt))
            for gr, gt in product(self.risk_values, self.trade_values)
        ]

    def __len__(self) -> int:
        return len(self.risk_values) * len(self.trade_values)


@dataclass(frozen=True)
class FrontierPoint:
    """Outcome of one (family, pair, seed) backtest. EW points carry no prefs."""

    excess_risk: float
    excess_return: float
    prefs: Optional[InvestorPreferences]
    seed: int
    family: str = ""
    variant: str = ""
    sharpe: Optional[float] = None

    def sort_key(self) -> tuple:
        gr, gt = self.prefs.as_tuple() if self.prefs else (-1.0, -1.0)
        return (self.family, self.variant, gr, gt, self.seed)


@dataclass(frozen=True)
class ParetoFrontier:
    """Non-dominated points, excess risk ascending, excess return strictly increasing."""

    points: tuple[FrontierPoint, ...]

    @property
    def risks(self) -> np.ndarray:
        return np.array([p.excess_risk for p in self.points])

    @property
    def returns(self) -> np.ndarray:
        return np.array([p.excess_return for p in self.points])

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        return self.risks, self.returns

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class MeanFrontier:
    """Mean of per-seed frontiers on a shared risk grid with a Student-t band."""

    grid: np.ndarray
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_seeds: int
    family: str = ""

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid, self.mean


@dataclass
class SweepOutcome:
    """Points from the tasks that succeeded plus (γ_risk, γ_trade, seed, message) failures."""

    points: list[FrontierPoint] = field(default_factory=list)
    failures: list[tuple[float, float, int, str]] = field(default_factory=list)

    def raise_for_failures(self) -> None:
        if self.failures:
            raise SweepError(f"{len(self.failures)} sweep task(s) failed", self.failures)


@dataclass(frozen=True)
class SweepSettings:
    """Everything a sweep task needs besides the market context."""

    test_range: tuple[int, int]
    train_range: Optional[tuple[int, int]] = None
    cost_params: CostParams = CostParams()
    training: TrainingConfig = TrainingConfig()
    horizon: int = 2
    lookback: int = LOOKBACK
    conv_width: int = CONV_WIDTH
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    model_dir: Optional[str] = None


@dataclass(frozen=True)
class SweepTask:
    family: str
    variant: str
    prefs: Optional[InvestorPreferences]
    seed: int
    settings: SweepSettings


# --- Pareto machinery ---


def pareto_filter(points: Sequence[FrontierPoint]) -> ParetoFrontier:
    """
    Keep the points no other point dominates.

    A point is dominated when another has excess risk <= and excess
    return >= with at least one strict. Exact duplicates keep the first
    in input order.

    Raises:
        ValueError: Empty input
    """
    if not points:
        raise ValueError("pareto_filter needs at least one point")
    order = sorted(
        range(len(points)),
        key=lambda i: (points[i].excess_risk, -points[i].excess_return, i),
    )
    kept = []
    best = -np.inf
    for i in order:
        if points[i].excess_return > best:
            kept.append(points[i])
            best = points[i].excess_return
    return ParetoFrontier(points=tuple(kept))


def frontiers_by_seed(points: Sequence[FrontierPoint]) -> dict[int, ParetoFrontier]:
    """Pareto frontier of each seed's points."""
    groups = defaultdict(list)
    for p in points:
        groups[p.seed].append(p)
    return {seed: pareto_filter(group) for seed, group in sorted(groups.items())}


def _common_grid(curves: Sequence[tuple[np.ndarray, np.ndarray]], resolution: int) -> np.ndarray:
    lo = max(float(r.min()) for r, _ in curves)
    hi = min(float(r.max()) for r, _ in curves)
    if lo > hi:
        raise DisjointSupportError(
            f"disjoint support: frontier risk ranges do not overlap ({lo:.6g} > {hi:.6g})"
        )
    return np.linspace(lo, hi, resolution)


def mean_frontier(
    frontiers: Sequence[ParetoFrontier],
    grid_resolution: int = MEAN_GRID_POINTS,
    family: str = "",
) -> MeanFrontier:
    """
    Average per-seed frontiers on a common excess-risk grid.

    Each frontier is linearly interpolated onto ``grid_resolution`` points
    spanning the intersection of the seeds' risk ranges. The band is the
    two-sided 95% Student-t interval with seeds-1 degrees of freedom.

    Raises:
        ValueError: Fewer than two frontiers
        DisjointSupportError: The risk ranges do not overlap
    """
    if len(frontiers) < 2:
        raise ValueError(f"mean_frontier needs at least 2 frontiers, got {len(frontiers)}")
    if grid_resolution < 2:
        raise ValueError(f"grid_resolution must be >= 2, got {grid_resolution}")
    curves = [f.curve() for f in frontiers]
    grid = _common_grid(curves, grid_resolution)
    values = np.array([np.interp(grid, risks, rets) for risks, rets in curves])

    m = len(frontiers)
    mean = values.mean(axis=0)
    spread = values.std(axis=0, ddof=1)
    half = stats.t.ppf(0.5 + CONFIDENCE / 2, m - 1) * spread / np.sqrt(m)
    return MeanFrontier(
        grid=grid,
        mean=mean,
        ci_low=mean - half,
        ci_high=mean + half,
        n_seeds=m,
        family=family,
    )


def dominance_share(
    a: Union[ParetoFrontier, MeanFrontier],
    b: Union[ParetoFrontier, MeanFrontier],
    grid_resolution: int = MEAN_GRID_POINTS,
) -> float:
    """Fraction of the shared risk grid where ``a``'s return is >= ``b``'s."""
    ca, cb = a.curve(), b.curve()
    grid = _common_grid([ca, cb], grid_resolution)
    ya = np.interp(grid, *ca)
    yb = np.interp(grid, *cb)
    return float(np.mean(ya >= yb))


# --- Running ---


def plan_tasks(
    family: str,
    grid: SweepGrid,
    seeds: Sequence[int],
    settings: SweepSettings,
) -> list[SweepTask]:
    """One task per (pair, seed); a single task for EW."""
    base, variant = parse_family(family)
    if not seeds:
        raise ValueError("at least one seed is required")
    if base == "ew":
        return [SweepTask(base, variant, None, int(seeds[0]), settings)]
    return [
        SweepTask(base, variant, prefs, int(seed), settings)
        for prefs in grid.pairs
        for seed in seeds
    ]


def build_strategy(task: SweepTask, ctx: MarketContext):
    """Strategy for ``task``; FRONTIER families are trained on the training slice first."""
    s = task.settings
    if task.family == "ew":
        return EqualWeightStrategy()
    if task.family in ("spo", "mpo"):
        return OptimizationStrategy(
            task.prefs,
            horizon=1 if task.family == "spo" else s.horizon,
            cost_params=s.cost_params,
            tol=s.tol,
            max_iter=s.max_iter,
        )
    if s.train_range is None:
        raise FrontierError("FRONTIER families need a training range")
    net = PolicyNetwork.initialize(
        Variant(task.variant),
        ctx.n_assets,
        seed=task.seed,
        scale=s.training.init_scale,
        lookback=s.lookback,
        conv_width=s.conv_width,
        horizon=s.horizon,
    )
    data = TrainingSlice(ctx, s.train_range[0], s.train_range[1], s.cost_params)
    rng = np.random.default_rng([task.seed, 1])
    trained = train(net, data, task.prefs, s.training, rng)
    if s.model_dir:
        gr, gt = task.prefs.as_tuple()
        name = f"{family_name(task.family, task.variant)}_{gr:g}_{gt:g}_{task.seed}.policy"
        Path(s.model_dir).mkdir(parents=True, exist_ok=True)
        trained.save(Path(s.model_dir) / name)
    return PolicyStrategy(trained)


def execute_task(context: MarketContext, task: SweepTask):
    """
    Run one task; returns a FrontierPoint or a failure tuple.
    """
    gr, gt = task.prefs.as_tuple() if task.prefs else (float("nan"), float("nan"))
    try:
        ctx = context.with_seed(task.seed)
        strategy = build_strategy(task, ctx)
        result = run_backtest(strategy, ctx, task.settings.test_range, task.settings.cost_params)
    except (FrontierError, ValueError, ArithmeticError) as e:
        logger.warning("Task %s (%g, %g) seed %d failed: %s", task.family, gr, gt, task.seed, e)
        return (gr, gt, task.seed, f"{type(e).__name__}: {e}")

    summary = result.summary
    logger.info(
        "%s (%g, %g) seed %d: excess risk %.4g, excess return %.4g",
        family_name(task.family, task.variant),
        gr,
        gt,
        task.seed,
        summary.excess_risk,
        summary.excess_return,
    )
    return FrontierPoint(
        excess_risk=summary.excess_risk,
        excess_return=summary.excess_return,
        prefs=task.prefs,
        seed=task.seed,
        family=task.family,
        variant=task.variant,
        sharpe=summary.sharpe,
    )


_WORKER_CONTEXT: Optional[MarketContext] = None


def _init_worker(context: MarketContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = context


def _worker_execute(task: SweepTask):
    return execute_task(_WORKER_CONTEXT, task)


def _collect(results) -> SweepOutcome:
    outcome = SweepOutcome()
    for item in results:
        if isinstance(item, FrontierPoint):
            outcome.points.append(item)
        else:
            outcome.failures.append(item)
    outcome.points.sort(key=FrontierPoint.sort_key)
    outcome.failures.sort(key=lambda f: (f[2], f[0], f[1]))
    return outcome


async def run_sweep_async(
    family: str,
    context: MarketContext,
    grid: SweepGrid,
    seeds: Sequence[int],
    settings: SweepSettings,
    jobs: int = 1,
) -> SweepOutcome:
    """
    Run every (pair, seed) task of ``family``, at most ``jobs`` at a time.

    With ``jobs > 1`` tasks run in worker processes; each worker receives
    the context once. Results are sorted, so output does not depend on
    completion order.
    """
    tasks = plan_tasks(family, grid, seeds, settings)
    logger.info("Sweeping %s: %d task(s), %d job(s)", family, len(tasks), jobs)
    if jobs <= 1:
        return _collect(execute_task(context, task) for task in tasks)

    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(jobs)
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(context,)
    ) as pool:

        async def run_one(task: SweepTask):
            async with semaphore:
                return await loop.run_in_executor(pool, _worker_execute, task)

        results = await asyncio.gather(*(run_one(task) for task in tasks))
    return _collect(results)


def run_sweep(
    family: str,
    context: MarketContext,
    grid: SweepGrid,
    seeds: Sequence[int],
    settings: SweepSettings,
    jobs: int = 1,
) -> SweepOutcome:
    """Synchronous wrapper around ``run_sweep_async``."""
    return asyncio.run(run_sweep_async(family, context, grid, seeds, settings, jobs))


# --- CSV ---


def write_points_csv(points: Sequence[FrontierPoint], path: Union[str, Path]) -> Path:
    """Write ``family,variant,gamma_risk,gamma_trade,seed,excess_risk,excess_return,sharpe``."""
    rows = []
    for p in sorted(points, key=FrontierPoint.sort_key):
        gr, gt = p.prefs.as_tuple() if p.prefs else (None, None)
        rows.append([p.family, p.variant, gr, gt, p.seed, p.excess_risk, p.excess_return, p.sharpe])
    frame = pd.DataFrame(rows, columns=POINT_COLUMNS)
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.17g", na_rep="")
    return path


def read_points_csv(path: Union[str, Path]) -> list[FrontierPoint]:
    """Read points written by ``write_points_csv``."""
    frame = pd.read_csv(path, dtype={"family": str, "variant": str}, keep_default_na=True)
    points = []
    for row in frame.itertuples(index=False):
        has_prefs = not (pd.isna(row.gamma_risk) or pd.isna(row.gamma_trade))
        points.append(
            FrontierPoint(
                excess_risk=float(row.excess_risk),
                excess_return=float(row.excess_return),
                prefs=InvestorPreferences(float(row.gamma_risk), float(row.gamma_trade))
                if has_prefs
                else None,
                seed=int(row.seed),
                family="" if pd.isna(row.family) else str(row.family),
                variant="" if pd.isna(row.variant) else str(row.variant),
                sharpe=None if pd.isna(row.sharpe) else float(row.sharpe),
            )
        )
    return points


def write_mean_frontier_csv(frontiers: Sequence[MeanFrontier], path: Union[str, Path]) -> Path:
    """Write ``family,grid_risk,mean_return,ci_low,ci_high``."""
    frames = [
        pd.DataFrame(
            {
                "family": f.family,
                "grid_risk": f.grid,
                "mean_return": f.mean,
                "ci_low": f.ci_low,
                "ci_high": f.ci_high,
            }
        )
        for f in frontiers
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=MEAN_COLUMNS)
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def read_mean_frontier_csv(path: Union[str, Path]) -> list[MeanFrontier]:
    frame = pd.read_csv(path, dtype={"family": str})
    out = []
    for family, group in frame.groupby("family", sort=True):
        out.append(
            MeanFrontier(
                grid=group["grid_risk"].to_numpy(),
                mean=group["mean_return"].to_numpy(),
                ci_low=group["ci_low"].to_numpy(),
                ci_high=group["ci_high"].to_numpy(),
                n_seeds=0,
                family=str(family),
            )
        )
    return out
