"""
Pytest configuration for frontier-pm tests.

Provides synthetic markets, their CSV directories and run configurations.
"""

from pathlib import Path

import numpy as np
import pytest

from frontier.data import write_panel
from frontier.market import MarketContext
from frontier.synthetic import MarketRegime, constant_panel, generate_market

# Small enough for the solver and the trainer to run in well under a second
# per backtest; the covariance window is shortened to match.
SMALL_DAYS = 200
SMALL_ASSETS = 3
SMALL_WINDOW = 40
TRAIN_ROWS = (50, 129)
TEST_ROWS = (130, 199)


@pytest.fixture
def small_panel():
    """Synthetic upward market: 3 risky assets, 200 days."""
    return generate_market(
        n_assets=SMALL_ASSETS, n_days=SMALL_DAYS, regime=MarketRegime.UPWARD, seed=7
    )


@pytest.fixture
def small_context(small_panel):
    """Context over ``small_panel`` with a 40-day covariance window."""
    return MarketContext.build(
        small_panel,
        seed=0,
        baseline_end=TRAIN_ROWS[0],
        covariance_window=SMALL_WINDOW,
    )


@pytest.fixture
def flat_panel():
    """Two assets with constant prices and a constant risk-free rate."""
    closes = np.full((60, 2), 100.0)
    return constant_panel(closes, risk_free=np.full(60, 0.0001))


@pytest.fixture
def data_dir(tmp_path, small_panel) -> Path:
    """``small_panel`` written as CSV files."""
    directory = tmp_path / "data"
    write_panel(small_panel, directory)
    return directory


def _date(panel, row: int) -> str:
    return panel.dates[row].strftime("%Y-%m-%d")


@pytest.fixture
def make_config(tmp_path, data_dir, small_panel):
    """Factory writing a run configuration TOML; keyword args replace whole sections."""

    def make(name: str = "run.toml", **sections) -> Path:
        base = {
            "data": {"path": str(data_dir)},
            "period": {
                "train_start": _date(small_panel, TRAIN_ROWS[0]),
                "train_end": _date(small_panel, TRAIN_ROWS[1]),
                "test_start": _date(small_panel, TEST_ROWS[0]),
                "test_end": _date(small_panel, TEST_ROWS[1]),
            },
            "risk": {"window": SMALL_WINDOW},
            "solver": {"tol": 1e-7, "max_iter": 2000},
            "training": {"episodes": 3, "episode_length": 10, "log_every": 0},
            "sweep": {
                "families": ["ew", "spo"],
                "risk_values": [1.0, 20000.0],
                "trade_values": [1.0, 10.0],
            },
            "output": {"directory": str(tmp_path / "out")},
        }
        base.update(sections)
        path = tmp_path / name
        path.write_text(_to_toml(base))
        return path

    return make


def _to_toml(sections: dict) -> str:
    lines = []
    for section, values in sections.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\") + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)
