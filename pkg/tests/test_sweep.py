"""Tests for sweeps, Pareto extraction and mean frontiers."""

import numpy as np
import pytest
from scipy import stats

from frontier.agent import TrainingConfig
from frontier.errors import DisjointSupportError, SweepError
from frontier.optimizer import InvestorPreferences
from frontier.sweep import (
    FrontierPoint,
    ParetoFrontier,
    SweepGrid,
    SweepOutcome,
    SweepSettings,
    SweepTask,
    dominance_share,
    execute_task,
    family_name,
    frontiers_by_seed,
    mean_frontier,
    pareto_filter,
    parse_family,
    plan_tasks,
    read_mean_frontier_csv,
    read_points_csv,
    run_sweep,
    run_sweep_async,
    write_mean_frontier_csv,
    write_points_csv,
)

from .conftest import TRAIN_ROWS

TINY_GRID = SweepGrid(risk_values=(1.0, 20000.0), trade_values=(1.0, 10.0))


def _point(risk, ret, seed=0, prefs=None, family="spo", variant=""):
    return FrontierPoint(risk, ret, prefs, seed, family, variant)


def _frontier(risks, returns, seed=0):
    return ParetoFrontier(tuple(_point(r, v, seed) for r, v in zip(risks, returns)))


def _dominance_oracle(points):
    kept = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if j == i:
                continue
            weakly = q.excess_risk <= p.excess_risk and q.excess_return >= p.excess_return
            strict = q.excess_risk < p.excess_risk or q.excess_return > p.excess_return
            if weakly and strict:
                dominated = True
                break
        if not dominated:
            kept.append(p)
    return kept


@pytest.fixture
def settings():
    """Short test window after the small market's training rows."""
    return SweepSettings(test_range=(130, 145), train_range=TRAIN_ROWS)


class TestFamilies:
    """Test family naming."""

    def test_parse(self):
        """Test base family and variant split."""
        assert parse_family("frontier-log-returns") == ("frontier", "log-returns")
        assert parse_family("spo") == ("spo", "")

    def test_unknown(self):
        """Test an unknown family."""
        with pytest.raises(ValueError, match="Unknown strategy family"):
            parse_family("dqn")

    def test_family_name(self):
        """Test joining family and variant."""
        assert family_name("frontier", "all-inputs") == "frontier-all-inputs"
        assert family_name("ew", "") == "ew"


class TestSweepGrid:
    """Test preference grids."""

    def test_full_size(self):
        """Test 21 risk values × 24 trade values."""
        grid = SweepGrid.full()
        assert len(grid.risk_values) == 21
        assert len(grid.trade_values) == 24
        assert len(grid) == len(grid.pairs) == 504

    def test_small(self):
        """Test the 3 × 3 subset."""
        grid = SweepGrid.named("small")
        assert len(grid.pairs) == 9
        assert grid.pairs[0] == InvestorPreferences(1.0, 1.0)

    def test_subset(self):
        """Test restricting to values of the grid."""
        grid = SweepGrid.full().subset([1, 20000], [1, 10])
        assert len(grid) == 4
        with pytest.raises(ValueError, match="not in grid"):
            SweepGrid.full().subset([7.0])

    def test_unknown_name(self):
        """Test an unknown grid name."""
        with pytest.raises(ValueError):
            SweepGrid.named("medium")


class TestParetoFilter:
    """Test non-dominated filtering."""

    def test_example(self):
        """Test that a dominated point is dropped and the rest ordered by risk."""
        points = [_point(0.02, 0.001), _point(0.01, 0.0005), _point(0.015, 0.0004)]
        frontier = pareto_filter(points)
        assert [(p.excess_risk, p.excess_return) for p in frontier.points] == [
            (0.01, 0.0005),
            (0.02, 0.001),
        ]

    def test_equal_risk_keeps_higher_return(self):
        """Test weak risk comparison."""
        frontier = pareto_filter([_point(0.01, 0.0001), _point(0.01, 0.0003)])
        assert len(frontier) == 1
        assert frontier.points[0].excess_return == 0.0003

    def test_duplicates_keep_first(self):
        """Test that exact ties keep the first point in input order."""
        a = _point(0.01, 0.0002, seed=1)
        b = _point(0.01, 0.0002, seed=2)
        assert pareto_filter([a, b]).points == (a,)

    def test_empty(self):
        """Test that an empty input is rejected."""
        with pytest.raises(ValueError):
            pareto_filter([])

    def test_matches_dominance_oracle(self):
        """Test 1000 random points against the quadratic oracle."""
        rng = np.random.default_rng(0)
        points = [_point(float(r), float(v)) for r, v in zip(rng.uniform(0, 0.03, 1000), rng.normal(0, 0.001, 1000))]
        frontier = pareto_filter(points)
        expected = sorted(_dominance_oracle(points), key=lambda p: p.excess_risk)
        assert list(frontier.points) == expected
        assert np.all(np.diff(frontier.risks) > 0)
        assert np.all(np.diff(frontier.returns) > 0)

    def test_idempotent_and_permutation_invariant(self):
        """Test filter(filter(P)) == filter(P) and shuffle invariance."""
        rng = np.random.default_rng(1)
        points = [_point(float(r), float(v)) for r, v in zip(rng.uniform(0, 0.03, 300), rng.normal(0, 0.001, 300))]
        once = pareto_filter(points)
        assert pareto_filter(list(once.points)) == once
        shuffled = [points[i] for i in rng.permutation(len(points))]
        assert pareto_filter(shuffled) == once

    def test_frontiers_by_seed(self):
        """Test grouping by seed."""
        points = [_point(0.01, 0.001, seed=1), _point(0.02, 0.002, seed=0), _point(0.01, 0.0, seed=0)]
        frontiers = frontiers_by_seed(points)
        assert list(frontiers) == [0, 1]
        assert len(frontiers[0]) == 2


class TestMeanFrontier:
    """Test averaging seed frontiers."""

    def test_identical_frontiers(self):
        """Test that duplicated frontiers give the input with a zero-width band."""
        risks, returns = np.array([0.005, 0.01, 0.02]), np.array([0.0001, 0.0004, 0.0006])
        frontiers = [_frontier(risks, returns, seed) for seed in range(3)]
        mean = mean_frontier(frontiers)
        np.testing.assert_allclose(mean.mean, np.interp(mean.grid, risks, returns), atol=1e-15)
        np.testing.assert_allclose(mean.ci_high - mean.ci_low, 0.0, atol=1e-15)
        assert mean.grid[0] == 0.005 and mean.grid[-1] == 0.02
        assert len(mean.grid) == 100
        assert mean.n_seeds == 3

    def test_constant_offset(self):
        """Test two seeds at ±d: midline mean and half-width t(0.975, 1)·d."""
        risks = np.array([0.01, 0.02])
        mid = np.array([0.0002, 0.0005])
        d = 0.0001
        mean = mean_frontier([_frontier(risks, mid + d), _frontier(risks, mid - d, 1)], grid_resolution=11)
        np.testing.assert_allclose(mean.mean, np.interp(mean.grid, risks, mid), atol=1e-15)
        half = stats.t.ppf(0.975, 1) * d
        np.testing.assert_allclose(mean.ci_high - mean.mean, half, rtol=1e-9)
        np.testing.assert_allclose(mean.mean - mean.ci_low, half, rtol=1e-9)

    def test_intersection_grid(self):
        """Test that the grid spans only the shared risk range."""
        a = _frontier([0.0, 0.02], [0.0, 0.002])
        b = _frontier([0.01, 0.03], [0.001, 0.002], seed=1)
        mean = mean_frontier([a, b], grid_resolution=5)
        np.testing.assert_allclose(mean.grid, [0.01, 0.0125, 0.015, 0.0175, 0.02])
        assert np.all(mean.ci_low <= mean.mean) and np.all(mean.mean <= mean.ci_high)

    def test_disjoint_support(self):
        """Test non-overlapping seed ranges."""
        a = _frontier([0.0, 0.01], [0.0, 0.001])
        b = _frontier([0.02, 0.03], [0.001, 0.002], seed=1)
        with pytest.raises(DisjointSupportError, match="disjoint support"):
            mean_frontier([a, b])

    def test_single_seed(self):
        """Test that one frontier is not enough."""
        with pytest.raises(ValueError):
            mean_frontier([_frontier([0.0, 0.01], [0.0, 0.001])])

    def test_dominance_share(self):
        """Test a frontier above another everywhere."""
        high = _frontier([0.0, 0.02], [0.001, 0.003])
        low = _frontier([0.0, 0.02], [0.0, 0.002])
        assert dominance_share(high, low) == 1.0
        assert dominance_share(low, high) == 0.0


class TestPlanTasks:
    """Test task expansion."""

    def test_equal_weight_runs_once(self, settings):
        """Test that EW ignores preferences and seeds."""
        tasks = plan_tasks("ew", TINY_GRID, [0, 1, 2], settings)
        assert len(tasks) == 1
        assert tasks[0].prefs is None

    def test_pairs_times_seeds(self, settings):
        """Test 2×2 pairs × 2 seeds = 8 tasks."""
        tasks = plan_tasks("spo", TINY_GRID, [0, 1], settings)
        assert len(tasks) == 8
        assert {t.seed for t in tasks} == {0, 1}

    def test_frontier_variant(self, settings):
        """Test that FRONTIER tasks carry their variant."""
        tasks = plan_tasks("frontier-forecast-only", TINY_GRID, [0], settings)
        assert {(t.family, t.variant) for t in tasks} == {("frontier", "forecast-only")}

    def test_no_seeds(self, settings):
        """Test that a seed list is required."""
        with pytest.raises(ValueError):
            plan_tasks("spo", TINY_GRID, [], settings)


class TestExecuteTask:
    """Test single-task execution."""

    def test_optimization_point(self, small_context, settings):
        """Test an SPO task producing a frontier point."""
        task = SweepTask("spo", "", InvestorPreferences(10.0, 1.0), 0, settings)
        point = execute_task(small_context, task)
        assert isinstance(point, FrontierPoint)
        assert point.prefs == InvestorPreferences(10.0, 1.0)
        assert point.excess_risk >= 0

    def test_frontier_point_and_saved_model(self, small_context, tmp_path):
        """Test training, backtesting and saving a FRONTIER policy."""
        settings = SweepSettings(
            test_range=(130, 145),
            train_range=TRAIN_ROWS,
            training=TrainingConfig(episodes=2, episode_length=10, log_every=0),
            lookback=6,
            conv_width=3,
            model_dir=str(tmp_path / "models"),
        )
        task = SweepTask("frontier", "log-returns", InvestorPreferences(1.0, 10.0), 3, settings)
        point = execute_task(small_context, task)
        assert isinstance(point, FrontierPoint)
        assert point.variant == "log-returns"
        assert (tmp_path / "models" / "frontier-log-returns_1_10_3.policy").exists()

    def test_failure_tuple(self, small_context):
        """Test that a failing task reports (γ_risk, γ_trade, seed, message)."""
        settings = SweepSettings(test_range=(130, 145))
        task = SweepTask("frontier", "log-returns", InvestorPreferences(1.0, 10.0), 4, settings)
        failure = execute_task(small_context, task)
        assert failure[:3] == (1.0, 10.0, 4)
        assert "training range" in failure[3]


class TestRunSweep:
    """Test whole sweeps."""

    @pytest.mark.asyncio
    async def test_async_sweep_sorted(self, small_context, settings):
        """Test that every (pair, seed) yields a point, sorted by preferences and seed."""
        outcome = await run_sweep_async("spo", small_context, TINY_GRID, [1, 0], settings)
        assert not outcome.failures
        assert len(outcome.points) == 8
        assert outcome.points == sorted(outcome.points, key=FrontierPoint.sort_key)

    def test_seed_changes_forecasts(self, small_context, settings):
        """Test that different seeds give different SPO outcomes."""
        grid = SweepGrid(risk_values=(1.0,), trade_values=(1.0,))
        outcome = run_sweep("spo", small_context, grid, [0, 1], settings)
        a, b = outcome.points
        assert (a.excess_risk, a.excess_return) != (b.excess_risk, b.excess_return)

    def test_parallel_matches_serial(self, small_context, settings):
        """Test that worker processes give the same points as a serial run."""
        grid = SweepGrid(risk_values=(1.0, 100.0), trade_values=(1.0,))
        serial = run_sweep("spo", small_context, grid, [0], settings, jobs=1)
        parallel = run_sweep("spo", small_context, grid, [0], settings, jobs=2)
        assert serial.points == parallel.points

    def test_failures_collected(self, small_context):
        """Test that failing tasks are reported, not raised."""
        settings = SweepSettings(test_range=(130, 145))
        grid = SweepGrid(risk_values=(1.0,), trade_values=(1.0, 10.0))
        outcome = run_sweep("frontier-log-returns", small_context, grid, [0], settings)
        assert not outcome.points
        assert len(outcome.failures) == 2
        with pytest.raises(SweepError) as excinfo:
            outcome.raise_for_failures()
        assert len(excinfo.value.failures) == 2

    def test_empty_outcome_does_not_raise(self):
        """Test a clean outcome."""
        SweepOutcome().raise_for_failures()


class TestCsv:
    """Test point and mean-frontier files."""

    def test_points_round_trip(self, tmp_path):
        """Test that points survive a write/read, including EW's missing preferences."""
        points = [
            FrontierPoint(0.011, 0.0004, InvestorPreferences(1.0, 10.0), 0, "spo", "", 0.036),
            FrontierPoint(0.0, 0.0, InvestorPreferences(20000.0, 1.0), 1, "spo", "", None),
            FrontierPoint(0.013, 0.0005, None, 0, "ew", "", 0.038),
            FrontierPoint(0.012, 0.0003, InvestorPreferences(0.1, 0.5), 2, "frontier", "all-inputs", 0.025),
        ]
        path = write_points_csv(points, tmp_path / "points.csv")
        assert read_points_csv(path) == sorted(points, key=FrontierPoint.sort_key)

    def test_points_header(self, tmp_path):
        """Test the column order."""
        path = write_points_csv([_point(0.01, 0.001, prefs=InvestorPreferences(1, 1))], tmp_path / "p.csv")
        assert path.read_text().splitlines()[0] == (
            "family,variant,gamma_risk,gamma_trade,seed,excess_risk,excess_return,sharpe"
        )

    def test_mean_frontier_round_trip(self, tmp_path):
        """Test writing and reading mean frontiers of two families."""
        frontiers = [_frontier([0.0, 0.02], [0.0, 0.002]), _frontier([0.0, 0.02], [0.0005, 0.001], 1)]
        means = [mean_frontier(frontiers, 10, family="spo"), mean_frontier(frontiers, 10, family="mpo")]
        path = write_mean_frontier_csv(means, tmp_path / "mean.csv")
        loaded = read_mean_frontier_csv(path)
        assert [m.family for m in loaded] == ["mpo", "spo"]
        np.testing.assert_array_equal(loaded[1].grid, means[0].grid)
        np.testing.assert_array_equal(loaded[1].ci_high, means[0].ci_high)
