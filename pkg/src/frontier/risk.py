"""
Factor risk model.

Approximates the return covariance by FΣ^fFᵀ + D, where F holds the top-k
eigenvectors of the trailing sample covariance, Σ^f their eigenvalues and
D the diagonal of the discarded eigencomponents. Cash is carried as an
all-zero row/column.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .data import ReturnsPanel
from .errors import DimensionError, InsufficientHistoryError

logger = logging.getLogger(__name__)

# Trailing window in trading days ("two years")
COVARIANCE_WINDOW = 500
DEFAULT_FACTORS = 15
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class FactorRiskModel:
    """Low-rank-plus-diagonal covariance estimate Σ̂ = FΣ^fFᵀ + D."""

    loadings: np.ndarray  # F, shape (m, k)
    factor_variances: np.ndarray  # diag(Σ^f), shape (k,), descending
    idiosyncratic: np.ndarray  # diag(D), shape (m,)

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    @property
    def dimension(self) -> int:
        return self.loadings.shape[0]

    @property
    def factor_cov(self) -> np.ndarray:
        return np.diag(self.factor_variances)

    def covariance(self) -> np.ndarray:
        """Dense Σ̂."""
        f = self.loadings
        return (f * self.factor_variances) @ f.T + np.diag(self.idiosyncratic)

    def exposures(self, holdings: np.ndarray) -> np.ndarray:
        """Factor exposures Fᵀh."""
        return self.loadings.T @ holdings

    def risk(self, holdings: np.ndarray) -> float:
        """ψ(h) = hᵀΣ̂h through the factor structure."""
        h = self._check(holdings)
        e = self.loadings.T @ h
        return float(e @ (self.factor_variances * e) + h @ (self.idiosyncratic * h))

    def risk_gradient(self, holdings: np.ndarray) -> np.ndarray:
        """∇ψ(h) = 2Σ̂h, rows of a matrix treated as separate holdings."""
        h = np.asarray(holdings, dtype=float)
        e = h @ self.loadings
        return 2.0 * ((e * self.factor_variances) @ self.loadings.T + h * self.idiosyncratic)

    def _check(self, holdings: np.ndarray) -> np.ndarray:
        h = np.asarray(holdings, dtype=float)
        if h.shape != (self.dimension,):
            raise DimensionError(
                f"holdings have shape {h.shape}, expected ({self.dimension},)"
            )
        return h


def trailing_covariance(
    returns: ReturnsPanel, t: int, window: int = COVARIANCE_WINDOW
) -> np.ndarray:
    """
    Population covariance of risky simple returns over rows t-window .. t-1.

    Args:
        returns: Returns panel (cash last)
        t: Returns-row index; row t itself is excluded
        window: Number of trailing rows

    Returns:
        (n+1)×(n+1) matrix with zero cash row and column

    Raises:
        InsufficientHistoryError: Fewer than ``window`` rows before t
    """
    if t < window or t > len(returns.simple_returns):
        raise InsufficientHistoryError(
            f"insufficient history: covariance needs {window} return rows before row {t}"
        )
    risky = returns.simple_returns[t - window : t, :-1]
    n = risky.shape[1]
    cov = np.zeros((n + 1, n + 1))
    cov[:n, :n] = np.atleast_2d(np.cov(risky, rowvar=False, bias=True))
    return cov


def default_factor_count(n_risky: int) -> int:
    """min(15, n-1), and at least one factor."""
    return max(1, min(DEFAULT_FACTORS, n_risky - 1))


def fit_factor_model(cov: np.ndarray, k: int, cash_last: bool = False) -> FactorRiskModel:
    """
    Fit a k-factor model by eigendecomposition.

    Args:
        cov: Symmetric PSD matrix
        k: Number of factors, 1 <= k <= decomposed dimension
        cash_last: Treat the last row/column as the cash slot; it is left
            out of the decomposition and re-attached as zeros

    Raises:
        DimensionError: ``cov`` is not square
        ValueError: ``cov`` is asymmetric or k is out of range
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOL * scale):
        raise ValueError("covariance matrix is not symmetric")

    block = cov[:-1, :-1] if cash_last else cov
    m = block.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"factor count k={k} out of range [1, {m}]")

    values, vectors = np.linalg.eigh((block + block.T) / 2)
    order = np.argsort(-values, kind="stable")
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order]

    loadings = vectors[:, :k]
    # Diagonal of the discarded components; Σ̂ keeps diag(cov)
    residual = (vectors[:, k:] ** 2) @ values[k:]

    if cash_last:
        loadings = np.vstack([loadings, np.zeros((1, k))])
        residual = np.append(residual, 0.0)

    logger.debug(
        "Fitted %d-factor model on %d assets (explained %.3f of variance)",
        k,
        m,
        values[:k].sum() / values.sum() if values.sum() > 0 else 1.0,
    )
    return FactorRiskModel(
        loadings=loadings,
        factor_variances=values[:k].copy(),
        idiosyncratic=residual,
    )


def quadratic_risk(model: FactorRiskModel, holdings: np.ndarray) -> float:
    """
    Portfolio variance estimate hᵀΣ̂h in O(nk).

    Raises:
        DimensionError: ``holdings`` length differs from the model dimension
    """
    return model.risk(holdings)
