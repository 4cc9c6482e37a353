"""Tests for market data loading and estimation."""

import numpy as np
import pandas as pd
import pytest

from frontier.data import (
    CASH,
    ForecastConfig,
    compute_returns,
    forecast_matrix,
    intraday_volatility_proxy,
    load_panel,
    normalize_features,
    rolling_estimates,
    rolling_volatility_estimate,
    rolling_volume_estimate,
    simulate_forecast,
    write_panel,
)
from frontier.errors import (
    CalendarMisalignmentError,
    DataError,
    DataFileNotFoundError,
    DegenerateBaselineError,
    InsufficientHistoryError,
    MalformedDataError,
    NonPositivePriceError,
)
from frontier.synthetic import constant_panel


def _write_asset(directory, name, rows):
    lines = ["date,open,high,low,close,volume"]
    lines += [",".join(str(v) for v in row) for row in rows]
    (directory / f"{name}.csv").write_text("\n".join(lines) + "\n")


def _write_rates(directory, dates, rate=0.0001):
    lines = ["date,rate"] + [f"{d},{rate}" for d in dates]
    (directory / "risk_free.csv").write_text("\n".join(lines) + "\n")


DATES = ["2021-03-01", "2021-03-02", "2021-03-03"]


class TestLoadPanel:
    """Test CSV ingestion."""

    def _valid(self, tmp_path):
        _write_rates(tmp_path, DATES)
        for name in ("AAA", "BBB"):
            _write_asset(tmp_path, name, [(d, 10, 11, 9, 10.5, 1000) for d in DATES])

    def test_two_assets_three_dates(self, tmp_path):
        """Test that a well-formed directory loads into an aligned panel."""
        self._valid(tmp_path)
        panel = load_panel(tmp_path)
        assert panel.n_risky == 2
        assert len(panel) == 3
        assert panel.assets == ("AAA", "BBB", CASH)
        assert panel.close.shape == (3, 2)
        np.testing.assert_allclose(panel.risk_free, 0.0001)

    def test_missing_interior_date_is_misaligned(self, tmp_path):
        """Test that an asset missing a calendar date is rejected."""
        self._valid(tmp_path)
        _write_asset(tmp_path, "BBB", [(d, 10, 11, 9, 10.5, 1000) for d in (DATES[0], DATES[2])])
        with pytest.raises(CalendarMisalignmentError, match="calendar misalignment"):
            load_panel(tmp_path)

    def test_extra_date_is_misaligned(self, tmp_path):
        """Test that an asset with a date the calendar lacks is rejected."""
        self._valid(tmp_path)
        _write_rates(tmp_path, [DATES[0], DATES[2]])
        with pytest.raises(CalendarMisalignmentError, match="BBB|AAA"):
            load_panel(tmp_path)

    def test_zero_close_rejected(self, tmp_path):
        """Test that a zero price raises a non-positive price error."""
        self._valid(tmp_path)
        _write_asset(
            tmp_path,
            "AAA",
            [(DATES[0], 10, 11, 9, 10, 1000), (DATES[1], 10, 11, 9, 0, 1000), (DATES[2], 10, 11, 9, 10, 1000)],
        )
        with pytest.raises(NonPositivePriceError, match="non-positive price"):
            load_panel(tmp_path)

    def test_missing_file_names_path(self, tmp_path):
        """Test that a requested asset without a file names the path."""
        self._valid(tmp_path)
        with pytest.raises(DataFileNotFoundError, match="ZZZ.csv"):
            load_panel(tmp_path, assets=["AAA", "ZZZ"])

    def test_missing_file_is_also_file_not_found(self, tmp_path):
        """Test that the missing-file error is catchable as FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_panel(tmp_path / "nowhere")

    def test_malformed_row(self, tmp_path):
        """Test that a non-numeric cell is reported with its row."""
        self._valid(tmp_path)
        _write_asset(
            tmp_path,
            "AAA",
            [(DATES[0], 10, 11, 9, 10, 1000), (DATES[1], 10, 11, 9, "abc", 1000), (DATES[2], 10, 11, 9, 10, 1000)],
        )
        with pytest.raises(MalformedDataError, match="malformed row 3"):
            load_panel(tmp_path)

    def test_wrong_header(self, tmp_path):
        """Test that an unexpected header is rejected."""
        self._valid(tmp_path)
        (tmp_path / "AAA.csv").write_text("day,open,high,low,close,volume\n")
        with pytest.raises(MalformedDataError, match="expected header"):
            load_panel(tmp_path)

    def test_calendar_restricts_dates(self, tmp_path):
        """Test that a calendar range keeps only the dates inside it."""
        self._valid(tmp_path)
        panel = load_panel(tmp_path, calendar=("2021-03-02", "2021-03-03"))
        assert list(panel.dates) == [pd.Timestamp("2021-03-02"), pd.Timestamp("2021-03-03")]

    def test_all_data_errors_share_a_base(self, tmp_path):
        """Test that loading errors derive from DataError."""
        with pytest.raises(DataError):
            load_panel(tmp_path)

    def test_write_panel_round_trip(self, tmp_path, small_panel):
        """Test that write_panel output loads back to the same panel."""
        write_panel(small_panel, tmp_path)
        loaded = load_panel(tmp_path)
        assert loaded.assets == small_panel.assets
        assert (loaded.dates == small_panel.dates).all()
        np.testing.assert_allclose(loaded.close, small_panel.close, rtol=1e-9)
        np.testing.assert_allclose(loaded.volume, small_panel.volume, rtol=1e-9)


class TestPricePanel:
    """Test PricePanel invariants."""

    def test_arrays_are_read_only(self, small_panel):
        """Test that panel arrays cannot be modified in place."""
        with pytest.raises(ValueError):
            small_panel.close[0, 0] = 1.0

    def test_negative_volume_rejected(self):
        """Test that negative volume is malformed data."""
        panel = constant_panel(np.full((3, 1), 10.0))
        with pytest.raises(MalformedDataError, match="negative volume"):
            panel.replace(volume=np.array([[1.0], [-1.0], [1.0]]))


class TestComputeReturns:
    """Test simple and log returns."""

    def test_ten_percent(self):
        """Test closes [100, 110]."""
        returns = compute_returns(constant_panel(np.array([100.0, 110.0])))
        assert returns.simple_returns[0, 0] == pytest.approx(0.10)
        assert returns.log_returns[0, 0] == pytest.approx(np.log(1.10))
        assert returns.log_returns[0, 0] == pytest.approx(0.09531, abs=1e-5)

    def test_constant_closes(self):
        """Test that constant closes give zero returns."""
        returns = compute_returns(constant_panel(np.array([50.0, 50.0, 50.0])))
        np.testing.assert_array_equal(returns.simple_returns[:, 0], 0.0)

    def test_halving(self):
        """Test closes [100, 50]."""
        returns = compute_returns(constant_panel(np.array([100.0, 50.0])))
        assert returns.simple_returns[0, 0] == pytest.approx(-0.5)

    def test_cash_column_is_risk_free(self):
        """Test that the cash column equals the risk-free series from the second date."""
        panel = constant_panel(np.array([1.0, 2.0, 3.0]), risk_free=np.array([0.1, 0.2, 0.3]))
        returns = compute_returns(panel)
        np.testing.assert_array_equal(returns.simple_returns[:, -1], [0.2, 0.3])
        assert list(returns.dates) == list(panel.dates[1:])

    def test_single_date_rejected(self):
        """Test that one date is not enough."""
        with pytest.raises(InsufficientHistoryError):
            compute_returns(constant_panel(np.array([100.0])))

    def test_log_simple_relation(self, small_panel):
        """Test exp(log return) - 1 == simple return within 1e-12."""
        returns = compute_returns(small_panel)
        np.testing.assert_allclose(
            np.expm1(returns.log_returns), returns.simple_returns, rtol=0, atol=1e-12
        )


class TestRollingEstimates:
    """Test the trailing 10-day estimators."""

    def test_constant_volume(self):
        """Test that equal volumes average to themselves."""
        panel = constant_panel(np.full((12, 1), 10.0), volume=1000)
        assert rolling_volume_estimate(panel, 10)[0] == pytest.approx(1000)

    def test_volume_one_to_ten(self):
        """Test that volumes 1..10 average to 5.5, excluding day t."""
        panel = constant_panel(np.full((12, 1), 10.0)).replace(
            volume=np.arange(1, 13, dtype=float)[:, None]
        )
        assert rolling_volume_estimate(panel, 10)[0] == pytest.approx(5.5)

    def test_volume_insufficient_history(self):
        """Test that day 5 has no complete window."""
        panel = constant_panel(np.full((12, 1), 10.0))
        with pytest.raises(InsufficientHistoryError, match="insufficient history"):
            rolling_volume_estimate(panel, 5)

    def test_constant_volatility(self):
        """Test constant σ = 0.01."""
        sigmas = np.full((11, 2), 0.01)
        np.testing.assert_allclose(rolling_volatility_estimate(sigmas, 10), 0.01)

    def test_volatility_ramp(self):
        """Test σ = 0.00 .. 0.09 averages to 0.045."""
        sigmas = np.arange(10)[:, None] * 0.01
        assert rolling_volatility_estimate(sigmas, 10)[0] == pytest.approx(0.045)

    def test_volatility_insufficient_history(self):
        """Test that too few rows raise."""
        with pytest.raises(InsufficientHistoryError):
            rolling_volatility_estimate(np.ones((5, 1)), 4)

    def test_vectorised_matches_pointwise(self, small_panel):
        """Test that rolling_estimates agrees with the per-date estimator."""
        table = rolling_estimates(small_panel.volume)
        assert np.isnan(table[:10]).all()
        for t in (10, 11, 57, len(small_panel) - 1):
            np.testing.assert_allclose(table[t], rolling_volume_estimate(small_panel, t), rtol=1e-12)

    def test_shift_equivariance(self):
        """Test that shifting the input by one day shifts the estimates by one day."""
        rng = np.random.default_rng(3)
        series = rng.uniform(1, 2, size=(40, 2))
        shifted = np.vstack([rng.uniform(1, 2, size=(1, 2)), series])
        np.testing.assert_allclose(
            rolling_estimates(shifted)[11:], rolling_estimates(series)[10:], rtol=1e-12
        )


class TestVolatilityProxy:
    """Test |log open - log close|."""

    def test_equal_prices(self):
        """Test open == close gives 0."""
        assert intraday_volatility_proxy(100, 100) == 0.0

    def test_up_day(self):
        """Test open 100, close 110."""
        assert intraday_volatility_proxy(100, 110) == pytest.approx(0.09531, abs=1e-5)

    def test_symmetry(self):
        """Test that swapping open and close gives the same value."""
        assert intraday_volatility_proxy(110, 100) == pytest.approx(intraday_volatility_proxy(100, 110))

    def test_non_positive(self):
        """Test that a zero price raises."""
        with pytest.raises(NonPositivePriceError):
            intraday_volatility_proxy(0, 100)


class TestForecasts:
    """Test noisy return forecasts."""

    def test_alpha(self):
        """Test α = σ²_r / (σ²_r + σ²_ε) = 0.2 for the default noise."""
        assert ForecastConfig(noise_variance=0.02, returns_variance=0.005).alpha == pytest.approx(0.2)

    def test_noiseless_is_identity(self):
        """Test σ²_ε = 0 returns r exactly."""
        r = np.array([0.01, -0.02, 0.003])
        out = simulate_forecast(r, ForecastConfig(noise_variance=0.0), np.random.default_rng(0))
        np.testing.assert_array_equal(out, r)

    def test_deterministic_given_seed(self):
        """Test that repeated calls with the same seed agree bitwise."""
        r = np.array([0.01, -0.02])
        cfg = ForecastConfig()
        a = simulate_forecast(r, cfg, np.random.default_rng(42))
        b = simulate_forecast(r, cfg, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_mean_converges_to_alpha_r(self):
        """Test that the mean over 10⁴ draws is within 3 standard errors of α·r."""
        cfg = ForecastConfig()
        r = np.array([0.01, -0.02])
        rng = np.random.default_rng(11)
        draws = np.array([simulate_forecast(r, cfg, rng) for _ in range(10_000)])
        se = cfg.alpha * np.sqrt(cfg.noise_variance / len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - cfg.alpha * r) < 3 * se)

    def test_invalid_config(self):
        """Test that invariants are enforced."""
        with pytest.raises(ValueError):
            ForecastConfig(noise_variance=-1)
        with pytest.raises(ValueError):
            ForecastConfig(returns_variance=0)
        with pytest.raises(ValueError):
            ForecastConfig(horizon=0)

    def test_forecast_matrix_rows_independent(self, small_panel):
        """Test that a row's forecast does not depend on how many rows exist."""
        cfg = ForecastConfig()
        full = forecast_matrix(compute_returns(small_panel), cfg, seed=5)
        head = forecast_matrix(compute_returns(small_panel.replace(
            dates=small_panel.dates[:50],
            open=small_panel.open[:50],
            high=small_panel.high[:50],
            low=small_panel.low[:50],
            close=small_panel.close[:50],
            volume=small_panel.volume[:50],
            risk_free=small_panel.risk_free[:50],
        )), cfg, seed=5)
        np.testing.assert_array_equal(full[:49], head)

    def test_forecast_matrix_assets_independent(self, small_panel):
        """Test that an asset's forecast does not depend on which other assets exist."""
        cfg = ForecastConfig()
        full = forecast_matrix(compute_returns(small_panel), cfg, seed=5)
        fewer = small_panel.replace(
            assets=small_panel.assets[:2] + small_panel.assets[-1:],
            open=small_panel.open[:, :2],
            high=small_panel.high[:, :2],
            low=small_panel.low[:, :2],
            close=small_panel.close[:, :2],
            volume=small_panel.volume[:, :2],
        )
        head = forecast_matrix(compute_returns(fewer), cfg, seed=5)
        np.testing.assert_array_equal(full[:, :2], head[:, :2])

    def test_forecast_matrix_cell_stream(self, small_panel):
        """Test that each cell's noise comes from the (seed, row, asset) stream."""
        cfg = ForecastConfig()
        returns = compute_returns(small_panel)
        out = forecast_matrix(returns, cfg, seed=9)
        row, asset = 17, 1
        rng = np.random.default_rng([9, row, asset])
        expected = cfg.alpha * (
            returns.simple_returns[row, asset] + rng.normal(0.0, np.sqrt(cfg.noise_variance))
        )
        assert out[row, asset] == pytest.approx(expected, rel=1e-12)

    def test_forecast_matrix_cash_is_risk_free(self, small_panel):
        """Test that the cash column is the known risk-free rate."""
        returns = compute_returns(small_panel)
        out = forecast_matrix(returns, ForecastConfig(), seed=1)
        np.testing.assert_array_equal(out[:, -1], returns.simple_returns[:, -1])

    def test_seeds_differ(self, small_panel):
        """Test that different seeds give different noise."""
        returns = compute_returns(small_panel)
        a = forecast_matrix(returns, ForecastConfig(), seed=1)
        b = forecast_matrix(returns, ForecastConfig(), seed=2)
        assert not np.array_equal(a[:, :-1], b[:, :-1])


class TestNormalizeFeatures:
    """Test baseline normalisation."""

    def test_constant_series_gives_ones(self):
        """Test that a series equal to its baseline mean becomes all ones."""
        values = np.full((40, 2), 3.0)
        np.testing.assert_allclose(normalize_features(values, values[:30]), 1.0)

    def test_division(self):
        """Test [2, 4] over baseline mean 2 gives [1, 2]."""
        baseline = np.full((30, 1), 2.0)
        out = normalize_features(np.array([[2.0], [4.0]]), baseline)
        np.testing.assert_allclose(out[:, 0], [1.0, 2.0])

    def test_zero_baseline(self):
        """Test that a zero baseline mean is degenerate."""
        with pytest.raises(DegenerateBaselineError, match="degenerate baseline"):
            normalize_features(np.ones((5, 1)), np.zeros((30, 1)))

    def test_short_baseline(self):
        """Test that fewer than 30 baseline rows is insufficient history."""
        with pytest.raises(InsufficientHistoryError):
            normalize_features(np.ones((5, 1)), np.ones((29, 1)))

    def test_baseline_inside_warm_up(self):
        """Test that NaN rows (rolling warm-up) in the baseline are rejected."""
        baseline = np.ones((30, 1))
        baseline[0] = np.nan
        with pytest.raises(InsufficientHistoryError):
            normalize_features(np.ones((5, 1)), baseline)
