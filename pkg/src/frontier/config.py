"""
Run configuration.

A run is described by one TOML file:

    [data]      path, risk_free_file, assets
    [period]    train_start, train_end, test_start, test_end
    [costs]     preset | a, b, c
    [forecast]  noise_variance, returns_variance, horizon
    [risk]      factors, window
    [solver]    tol, max_iter
    [training]  episodes, episode_length, gamma, learning_rate, ...
    [sweep]     grid, risk_values, trade_values, families, seeds, seed, jobs
    [output]    directory

Command-line flags override file values; FRONTIER_SEED overrides the file's
master seed but not the flag.
"""

import json
import logging
import os
import shutil
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

import pandas as pd

from .agent import TrainingConfig
from .costs import CostParams
from .data import BASELINE_DAYS, ROLLING_WINDOW, ForecastConfig, PricePanel, load_panel
from .errors import ConfigError, DataError, FrontierError
from .network import LOOKBACK
from .optimizer import DEFAULT_MAX_ITER, DEFAULT_TOL
from .risk import COVARIANCE_WINDOW
from .sweep import FAMILIES, SweepGrid, parse_family

logger = logging.getLogger(__name__)

SEED_ENV = "FRONTIER_SEED"
RESOLVED_CONFIG_FILE = "resolved_config.json"
CONFIG_COPY_FILE = "config.toml"


@dataclass(frozen=True)
class DataSection:
    path: Path = Path("data")
    risk_free_file: str = "risk_free.csv"
    assets: tuple[str, ...] = ()


@dataclass(frozen=True)
class PeriodSection:
    """Train and test date ranges (inclusive)."""

    train_start: str = ""
    train_end: str = ""
    test_start: str = ""
    test_end: str = ""

    def indices(self, panel: PricePanel) -> tuple[tuple[int, int], tuple[int, int]]:
        """
        Panel index ranges (train, test), snapping to trading days inside each range.

        Raises:
            ConfigError: A range has no trading days in the panel
        """

        def span(name: str, start: str, end: str) -> tuple[int, int]:
            lo = int(panel.dates.searchsorted(pd.Timestamp(start), side="left"))
            hi = int(panel.dates.searchsorted(pd.Timestamp(end), side="right")) - 1
            if lo > hi or lo >= len(panel):
                raise ConfigError(f"{name} range {start}..{end} has no trading days in the data")
            return lo, hi

        return (
            span("train", self.train_start, self.train_end),
            span("test", self.test_start, self.test_end),
        )


@dataclass(frozen=True)
class RiskSection:
    factors: Optional[int] = None
    window: int = COVARIANCE_WINDOW


@dataclass(frozen=True)
class SolverSection:
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER


@dataclass(frozen=True)
class SweepSection:
    grid: str = "small"
    risk_values: Optional[tuple[float, ...]] = None
    trade_values: Optional[tuple[float, ...]] = None
    families: tuple[str, ...] = ("ew", "spo", "mpo")
    seeds: int = 1
    seed: int = 0
    jobs: int = 1

    def sweep_grid(self) -> SweepGrid:
        grid = SweepGrid.named(self.grid)
        if self.risk_values is not None or self.trade_values is not None:
            grid = SweepGrid(
                risk_values=tuple(self.risk_values if self.risk_values is not None else grid.risk_values),
                trade_values=tuple(self.trade_values if self.trade_values is not None else grid.trade_values),
            )
        return grid

    def seed_list(self) -> list[int]:
        return [self.seed + i for i in range(self.seeds)]


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs."""

    data: DataSection = field(default_factory=DataSection)
    period: PeriodSection = field(default_factory=PeriodSection)
    costs: CostParams = field(default_factory=CostParams)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    risk: RiskSection = field(default_factory=RiskSection)
    solver: SolverSection = field(default_factory=SolverSection)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sweep: SweepSection = field(default_factory=SweepSection)
    output_dir: Path = Path("out")
    source: Optional[Path] = None

    def to_dict(self) -> dict:
        """JSON-ready view (paths as strings)."""
        out = asdict(self)
        out["data"]["path"] = str(self.data.path)
        out["output_dir"] = str(self.output_dir)
        out["source"] = None if self.source is None else str(self.source)
        return out


@dataclass(frozen=True)
class Diagnostic:
    """One named validation problem."""

    name: str
    message: str

    def __str__(self) -> str:
        return f"{self.name}: {self.message}"


# --- Loading ---


def _section(cls, raw: Mapping[str, Any], name: str, **converters):
    if not isinstance(raw, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    values = {}
    for key, value in raw.items():
        convert = converters.get(key)
        values[key] = convert(value) if convert else value
    try:
        return cls(**values)
    except (TypeError, ValueError, FrontierError) as e:
        raise ConfigError(f"invalid [{name}]: {e}") from e


def _float_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _costs(raw: Mapping[str, Any]) -> CostParams:
    raw = dict(raw)
    preset = raw.pop("preset", None)
    try:
        base = CostParams.preset(preset) if preset is not None else CostParams()
    except FrontierError as e:
        raise ConfigError(f"invalid [costs]: {e}") from e
    merged = {**asdict(base), **raw}
    return _section(CostParams, merged, "costs")


def parse_config(raw: Mapping[str, Any], base_dir: Path = Path("."), source: Optional[Path] = None) -> RunConfig:
    """
    Build a RunConfig from parsed TOML.

    Raises:
        ConfigError: Unknown section or key, or an invalid value
    """
    sections = {"data", "period", "costs", "forecast", "risk", "solver", "training", "sweep", "output"}
    unknown = sorted(set(raw) - sections)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")

    data = _section(
        DataSection,
        raw.get("data", {}),
        "data",
        path=lambda p: (base_dir / p) if not Path(p).is_absolute() else Path(p),
        assets=tuple,
    )
    period = _section(
        PeriodSection,
        {k: str(v) for k, v in raw.get("period", {}).items()},
        "period",
    )
    output = raw.get("output", {})
    unknown_out = sorted(set(output) - {"directory"})
    if unknown_out:
        raise ConfigError(f"unknown key(s) in [output]: {', '.join(unknown_out)}")
    out_dir = Path(output.get("directory", "out"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    return RunConfig(
        data=data,
        period=period,
        costs=_costs(raw.get("costs", {})),
        forecast=_section(ForecastConfig, raw.get("forecast", {}), "forecast"),
        risk=_section(RiskSection, raw.get("risk", {}), "risk"),
        solver=_section(SolverSection, raw.get("solver", {}), "solver"),
        training=_section(TrainingConfig, raw.get("training", {}), "training"),
        sweep=_section(
            SweepSection,
            raw.get("sweep", {}),
            "sweep",
            families=tuple,
            risk_values=_float_tuple,
            trade_values=_float_tuple,
        ),
        output_dir=out_dir,
        source=source,
    )


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Read a TOML run configuration.

    Relative data and output paths resolve against the file's directory.

    Raises:
        ConfigError: Missing file, TOML syntax error or invalid content
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(raw, base_dir=path.parent, source=path)


def apply_overrides(
    config: RunConfig,
    families: Optional[tuple[str, ...]] = None,
    seeds: Optional[int] = None,
    jobs: Optional[int] = None,
    out: Optional[Union[str, Path]] = None,
    grid: Optional[str] = None,
    seed: Optional[int] = None,
    env: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Layer flag values (and the FRONTIER_SEED variable) over ``config``.

    Precedence for the master seed: ``seed`` argument, then the
    environment, then the file.
    """
    env = os.environ if env is None else env
    sweep = config.sweep
    if seed is None and env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    changes = {}
    if families:
        changes["families"] = tuple(families)
    if seeds is not None:
        changes["seeds"] = seeds
    if jobs is not None:
        changes["jobs"] = jobs
    if grid is not None:
        changes["grid"] = grid
        changes["risk_values"] = None
        changes["trade_values"] = None
    if seed is not None:
        changes["seed"] = seed
    config = replace(config, sweep=replace(sweep, **changes))
    if out is not None:
        config = replace(config, output_dir=Path(out))
    return config


# --- Validation ---


def _required_decision(config: RunConfig, family: str) -> int:
    base, _ = parse_family(family)
    if base in ("spo", "mpo"):
        return max(config.risk.window, ROLLING_WINDOW)
    if base == "frontier":
        return max(LOOKBACK, ROLLING_WINDOW)
    return 0


def validate_config(config: RunConfig) -> list[Diagnostic]:
    """
    Check a configuration without running anything.

    Returns:
        Named diagnostics; empty when the configuration is usable
    """
    problems: list[Diagnostic] = []
    period = config.period
    sweep = config.sweep

    for family in sweep.families:
        if family not in FAMILIES:
            problems.append(Diagnostic("families", f"unknown family {family!r}"))
    if not sweep.families:
        problems.append(Diagnostic("families", "no strategy families selected"))
    if sweep.grid not in ("full", "small"):
        problems.append(Diagnostic("grid", f"unknown grid {sweep.grid!r}"))
    else:
        grid = sweep.sweep_grid()
        if len(grid) == 0:
            problems.append(Diagnostic("grid", "preference grid is empty"))
    if sweep.seeds < 1:
        problems.append(Diagnostic("seeds", f"need at least one seed, got {sweep.seeds}"))
    if sweep.jobs < 1:
        problems.append(Diagnostic("jobs", f"jobs must be >= 1, got {sweep.jobs}"))

    try:
        dates = [pd.Timestamp(getattr(period, f.name)) for f in fields(period)]
    except ValueError as e:
        problems.append(Diagnostic("period", f"unparseable date: {e}"))
        return problems
    if any(pd.isna(d) for d in dates):
        problems.append(Diagnostic("period", "train_start, train_end, test_start and test_end are required"))
        return problems
    train_start, train_end, test_start, test_end = dates
    if train_start > train_end:
        problems.append(Diagnostic("period", "train_start is after train_end"))
    if test_start > test_end:
        problems.append(Diagnostic("period", "test_start is after test_end"))
    if test_start <= train_end:
        problems.append(Diagnostic("period", "test range must start after the training range ends"))

    data_dir = config.data.path
    if not data_dir.is_dir():
        problems.append(Diagnostic("data", f"data directory not found: {data_dir}"))
        return problems
    if not (data_dir / config.data.risk_free_file).exists():
        problems.append(Diagnostic("data", f"risk-free file not found: {data_dir / config.data.risk_free_file}"))
        return problems
    for asset in config.data.assets:
        if not (data_dir / f"{asset}.csv").exists():
            problems.append(Diagnostic("data", f"asset file not found: {data_dir / (asset + '.csv')}"))
    if problems:
        return problems

    try:
        panel = load_panel(
            data_dir,
            assets=config.data.assets or None,
            risk_free_file=config.data.risk_free_file,
        )
        (train_lo, _), (test_lo, _) = period.indices(panel)
    except (DataError, ConfigError) as e:
        problems.append(Diagnostic("data", str(e)))
        return problems

    for family in sweep.families:
        if family not in FAMILIES:
            continue
        required = _required_decision(config, family)
        if test_lo - 1 < required:
            problems.append(
                Diagnostic(
                    "warm-up",
                    f"{family} needs {required + 1} days of history before the test start, "
                    f"found {test_lo}",
                )
            )
        if family.startswith("frontier") and train_lo - BASELINE_DAYS < ROLLING_WINDOW:
            problems.append(
                Diagnostic(
                    "warm-up",
                    f"{family} needs {BASELINE_DAYS + ROLLING_WINDOW} days before the training "
                    f"start for feature normalisation, found {train_lo}",
                )
            )
    return problems


# --- Run artifacts ---


def write_run_artifacts(config: RunConfig, out_dir: Optional[Path] = None) -> list[Path]:
    """
    Copy the config file into the output directory and write the resolved config.

    Returns:
        Paths written
    """
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if config.source is not None and Path(config.source).exists():
        target = out_dir / CONFIG_COPY_FILE
        shutil.copyfile(config.source, target)
        written.append(target)
    resolved = out_dir / RESOLVED_CONFIG_FILE
    resolved.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    written.append(resolved)
    return written
