"""Tests for the factor risk model."""

import numpy as np
import pytest

from frontier.data import compute_returns
from frontier.errors import DimensionError, InsufficientHistoryError
from frontier.risk import (
    FactorRiskModel,
    default_factor_count,
    fit_factor_model,
    quadratic_risk,
    trailing_covariance,
)
from frontier.synthetic import constant_panel


def _random_psd(rng, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n + 3))
    return a @ a.T / (n + 3)


class TestFitFactorModel:
    """Test the eigendecomposition fit."""

    def test_full_rank_reconstruction(self):
        """Test that k = n reproduces the covariance."""
        cov = _random_psd(np.random.default_rng(0), 6)
        model = fit_factor_model(cov, 6)
        np.testing.assert_allclose(model.covariance(), cov, atol=1e-10)
        np.testing.assert_allclose(model.idiosyncratic, 0.0, atol=1e-12)

    def test_identity_single_factor(self):
        """Test Σ = I₃, k = 1: one unit factor, residual of trace 2."""
        model = fit_factor_model(np.eye(3), 1)
        assert model.factor_variances[0] == pytest.approx(1.0)
        assert model.idiosyncratic.sum() == pytest.approx(2.0)
        np.testing.assert_allclose(np.diag(model.covariance()), 1.0, atol=1e-12)

    def test_diagonal_preserved(self):
        """Test diag(Σ̂) == diag(Σ) for random 10×10 matrices and every k."""
        rng = np.random.default_rng(1)
        for trial in range(100):
            cov = _random_psd(rng, 10)
            k = 1 + trial % 10
            model = fit_factor_model(cov, k)
            np.testing.assert_allclose(np.diag(model.covariance()), np.diag(cov), atol=1e-10)

    def test_factor_variances_descending(self):
        """Test that retained factors are ordered by variance."""
        model = fit_factor_model(_random_psd(np.random.default_rng(2), 5), 3)
        assert np.all(np.diff(model.factor_variances) <= 0)
        assert model.k == 3

    def test_perfectly_correlated(self):
        """Test that a rank-one matrix is captured by one factor."""
        x = np.array([1.0, 2.0, 3.0])
        cov = np.outer(x, x) * 1e-4
        model = fit_factor_model(cov, 1)
        np.testing.assert_allclose(model.covariance(), cov, atol=1e-14)
        np.testing.assert_allclose(model.idiosyncratic, 0.0, atol=1e-14)

    def test_cash_last(self):
        """Test that the cash slot is carried as zeros."""
        cov = np.zeros((3, 3))
        cov[:2, :2] = [[2e-4, 5e-5], [5e-5, 1e-4]]
        model = fit_factor_model(cov, 1, cash_last=True)
        assert model.dimension == 3
        np.testing.assert_array_equal(model.loadings[-1], 0.0)
        assert model.idiosyncratic[-1] == 0.0
        assert model.risk(np.array([0.0, 0.0, 1.0])) == 0.0

    def test_not_square(self):
        """Test a non-square matrix."""
        with pytest.raises(DimensionError):
            fit_factor_model(np.zeros((2, 3)), 1)

    def test_asymmetric(self):
        """Test an asymmetric matrix."""
        with pytest.raises(ValueError, match="not symmetric"):
            fit_factor_model(np.array([[1.0, 0.5], [0.0, 1.0]]), 1)

    @pytest.mark.parametrize("k", [0, 4])
    def test_k_out_of_range(self, k):
        """Test k outside [1, n]."""
        with pytest.raises(ValueError, match="out of range"):
            fit_factor_model(np.eye(3), k)

    def test_default_factor_count(self):
        """Test min(15, n-1) with a floor of one."""
        assert default_factor_count(1) == 1
        assert default_factor_count(5) == 4
        assert default_factor_count(100) == 15


class TestRisk:
    """Test ψ(h) = hᵀΣ̂h."""

    def test_cash_only(self):
        """Test that all-cash holdings have zero risk."""
        cov = np.zeros((4, 4))
        cov[:3, :3] = _random_psd(np.random.default_rng(3), 3)
        model = fit_factor_model(cov, 2, cash_last=True)
        assert quadratic_risk(model, np.array([0.0, 0.0, 0.0, 1.0])) == 0.0

    def test_unit_vector(self):
        """Test ψ(e_i) == Σ̂_ii."""
        model = fit_factor_model(_random_psd(np.random.default_rng(4), 5), 2)
        dense = model.covariance()
        for i in range(5):
            e = np.zeros(5)
            e[i] = 1.0
            assert model.risk(e) == pytest.approx(dense[i, i], rel=1e-12)

    def test_matches_dense(self):
        """Test the factored form against hᵀΣ̂h with the dense matrix."""
        rng = np.random.default_rng(5)
        model = fit_factor_model(_random_psd(rng, 8), 3)
        dense = model.covariance()
        for _ in range(50):
            h = rng.dirichlet(np.ones(8))
            assert model.risk(h) == pytest.approx(h @ dense @ h, rel=1e-10)

    def test_gradient(self):
        """Test ∇ψ(h) == 2Σ̂h, row-wise for matrices."""
        rng = np.random.default_rng(6)
        model = fit_factor_model(_random_psd(rng, 4), 2)
        h = rng.dirichlet(np.ones(4), size=3)
        np.testing.assert_allclose(model.risk_gradient(h), 2 * h @ model.covariance(), atol=1e-14)

    def test_wrong_length(self):
        """Test a holdings vector of the wrong dimension."""
        model = fit_factor_model(np.eye(3), 1)
        with pytest.raises(DimensionError):
            model.risk(np.ones(4))

    def test_zero_model(self):
        """Test a hand-built model with no variance at all."""
        model = FactorRiskModel(np.zeros((2, 1)), np.zeros(1), np.zeros(2))
        assert model.risk(np.array([0.5, 0.5])) == 0.0


class TestTrailingCovariance:
    """Test the sample covariance feeding the factor model."""

    def test_constant_prices(self):
        """Test that constant prices give a zero risky block."""
        returns = compute_returns(constant_panel(np.full((30, 2), 50.0)))
        cov = trailing_covariance(returns, 20, window=20)
        np.testing.assert_array_equal(cov, np.zeros((3, 3)))

    def test_excludes_row_t(self, small_panel):
        """Test that row t does not enter the window."""
        returns = compute_returns(small_panel)
        cov = trailing_covariance(returns, 60, window=40)
        expected = np.cov(returns.simple_returns[20:60, :-1], rowvar=False, bias=True)
        np.testing.assert_allclose(cov[:-1, :-1], expected, rtol=1e-12)
        np.testing.assert_array_equal(cov[-1], 0.0)
        np.testing.assert_array_equal(cov[:, -1], 0.0)

    def test_insufficient_history(self, small_panel):
        """Test t < window."""
        returns = compute_returns(small_panel)
        with pytest.raises(InsufficientHistoryError, match="insufficient history"):
            trailing_covariance(returns, 39, window=40)

    def test_fit_on_trailing(self, small_panel):
        """Test fitting the trailing covariance with the cash slot."""
        returns = compute_returns(small_panel)
        model = fit_factor_model(trailing_covariance(returns, 100, window=40), 2, cash_last=True)
        assert model.dimension == small_panel.n_assets
        assert model.risk(np.array([0.0, 0.0, 0.0, 1.0])) == 0.0
