"""
Policy networks mapping a market state to portfolio weights.

Three variants share one layout:

    [conv over the (n+1)×L log-return window, ReLU]   (log-returns, all-inputs)
    [H forecast vectors]                              (forecast-only, all-inputs)
    + current weights w (n+1), V̂ (n), σ̂ (n)
    -> dense (same width), ReLU -> dense 3(n+1), ReLU -> dense n+1, softmax

Parameters live in one flat vector; layers are reshaped views into it.
Gradients are computed by a hand-written reverse pass.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import softmax

from .errors import DimensionError

logger = logging.getLogger(__name__)

LOOKBACK = 20
CONV_WIDTH = 5
HORIZON = 2
INIT_SCALE = 0.05

FILE_FORMAT = "frontier-policy"
FILE_VERSION = 1


class Variant(str, Enum):
    """Which inputs a policy network sees."""

    LOG_RETURNS = "log-returns"
    FORECAST_ONLY = "forecast-only"
    ALL_INPUTS = "all-inputs"

    @property
    def uses_window(self) -> bool:
        return self is not Variant.FORECAST_ONLY

    @property
    def uses_forecasts(self) -> bool:
        return self is not Variant.LOG_RETURNS


@dataclass(frozen=True)
class StateInput:
    """
    Observation for one decision.

    ``log_return_window`` is (n+1)×L (oldest column first), ``forecasts``
    is H×(n+1). Variants ignore the parts they do not use.
    """

    weights: np.ndarray
    volume_features: np.ndarray
    volatility_features: np.ndarray
    log_return_window: Optional[np.ndarray] = None
    forecasts: Optional[np.ndarray] = None

    def with_weights(self, weights: np.ndarray) -> "StateInput":
        return StateInput(
            weights=weights,
            volume_features=self.volume_features,
            volatility_features=self.volatility_features,
            log_return_window=self.log_return_window,
            forecasts=self.forecasts,
        )


@dataclass(frozen=True)
class Architecture:
    """Size constants of a policy network."""

    variant: Variant
    n_assets: int  # n+1, cash included
    lookback: int = LOOKBACK
    conv_width: int = CONV_WIDTH
    horizon: int = HORIZON
    k_maps: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.k_maps is None:
            object.__setattr__(self, "k_maps", self.n_assets)
        if self.n_assets < 2:
            raise ValueError(f"n_assets must be >= 2 (one risky plus cash), got {self.n_assets}")
        if self.variant.uses_window and not 1 <= self.conv_width <= self.lookback:
            raise ValueError(
                f"conv_width {self.conv_width} must lie in [1, lookback={self.lookback}]"
            )
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @property
    def n_risky(self) -> int:
        return self.n_assets - 1

    @property
    def conv_length(self) -> int:
        return self.lookback - self.conv_width + 1

    @property
    def conv_size(self) -> int:
        return self.k_maps * self.conv_length if self.variant.uses_window else 0

    @property
    def forecast_size(self) -> int:
        return self.horizon * self.n_assets if self.variant.uses_forecasts else 0

    @property
    def input_size(self) -> int:
        """Width of the concatenated layer: conv + forecasts + 3n+1."""
        return self.conv_size + self.forecast_size + 3 * self.n_risky + 1

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        m, width = self.n_assets, self.input_size
        shapes = []
        if self.variant.uses_window:
            shapes += [
                ("conv_kernel", (self.k_maps, m * self.conv_width)),
                ("conv_bias", (self.k_maps,)),
            ]
        shapes += [
            ("w1", (width, width)),
            ("b1", (width,)),
            ("w2", (3 * m, width)),
            ("b2", (3 * m,)),
            ("w3", (m, 3 * m)),
            ("b3", (m,)),
        ]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout())

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "n_assets": self.n_assets,
            "lookback": self.lookback,
            "conv_width": self.conv_width,
            "horizon": self.horizon,
            "k_maps": self.k_maps,
        }


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by ``backward``."""

    patches: Optional[np.ndarray]
    conv_pre: Optional[np.ndarray]
    h0: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    out: np.ndarray


class PolicyNetwork:
    """
    Softmax policy network over n+1 assets.

    Example:
        net = PolicyNetwork.initialize(Variant.LOG_RETURNS, n_assets=4, seed=0)
        weights = net.forward(state)
    """

    def __init__(self, arch: Architecture, params: Optional[np.ndarray] = None):
        self.arch = arch
        if params is None:
            params = np.zeros(arch.n_params)
        params = np.asarray(params, dtype=float)
        if params.shape != (arch.n_params,):
            raise DimensionError(
                f"parameter vector has shape {params.shape}, expected ({arch.n_params},)"
            )
        self.params = params.copy()

    @classmethod
    def initialize(
        cls,
        variant: Union[Variant, str],
        n_assets: int,
        seed: int = 0,
        scale: float = INIT_SCALE,
        **sizes,
    ) -> "PolicyNetwork":
        """Uniform(-scale, scale) initialisation from ``seed``."""
        arch = Architecture(variant=Variant(variant), n_assets=n_assets, **sizes)
        rng = np.random.default_rng(seed)
        return cls(arch, rng.uniform(-scale, scale, size=arch.n_params))

    @property
    def variant(self) -> Variant:
        return self.arch.variant

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(self.arch, self.params)

    def layers(self, vector: Optional[np.ndarray] = None) -> dict[str, np.ndarray]:
        """Named views into ``vector`` (default: the parameters)."""
        vector = self.params if vector is None else vector
        views, offset = {}, 0
        for name, shape in self.arch.layout():
            size = int(np.prod(shape))
            views[name] = vector[offset : offset + size].reshape(shape)
            offset += size
        return views

    # --- Forward ---

    def _check_state(self, state: StateInput) -> None:
        arch = self.arch
        m, n = arch.n_assets, arch.n_risky
        expected = {
            "weights": (np.shape(state.weights), (m,)),
            "volume_features": (np.shape(state.volume_features), (n,)),
            "volatility_features": (np.shape(state.volatility_features), (n,)),
        }
        if arch.variant.uses_window:
            expected["log_return_window"] = (
                None if state.log_return_window is None else np.shape(state.log_return_window),
                (m, arch.lookback),
            )
        if arch.variant.uses_forecasts:
            expected["forecasts"] = (
                None if state.forecasts is None else np.shape(state.forecasts),
                (arch.horizon, m),
            )
        for name, (got, want) in expected.items():
            if got != want:
                raise DimensionError(f"state {name} has shape {got}, expected {want}")

    def forward_cached(self, state: StateInput) -> ForwardCache:
        """Forward pass keeping every intermediate value."""
        self._check_state(state)
        arch, p = self.arch, self.layers()

        parts = []
        patches = conv_pre = None
        if arch.variant.uses_window:
            window = np.asarray(state.log_return_window, dtype=float)
            # (m, conv_length, τ) -> (conv_length, m·τ)
            patches = (
                sliding_window_view(window, arch.conv_width, axis=1)
                .transpose(1, 0, 2)
                .reshape(arch.conv_length, -1)
            )
            conv_pre = patches @ p["conv_kernel"].T + p["conv_bias"]
            parts.append(np.maximum(conv_pre, 0.0).T.ravel())
        if arch.variant.uses_forecasts:
            parts.append(np.asarray(state.forecasts, dtype=float).ravel())
        parts += [
            np.asarray(state.weights, dtype=float),
            np.asarray(state.volume_features, dtype=float),
            np.asarray(state.volatility_features, dtype=float),
        ]
        h0 = np.concatenate(parts)

        a1 = p["w1"] @ h0 + p["b1"]
        h1 = np.maximum(a1, 0.0)
        a2 = p["w2"] @ h1 + p["b2"]
        h2 = np.maximum(a2, 0.0)
        a3 = p["w3"] @ h2 + p["b3"]
        out = softmax(a3)
        return ForwardCache(patches, conv_pre, h0, a1, h1, a2, h2, out)

    def forward(self, state: StateInput) -> np.ndarray:
        """Portfolio weights w_{t+1} for ``state`` (a simplex point)."""
        return self.forward_cached(state).out

    # --- Backward ---

    def weights_offset(self) -> int:
        """Position of the current-weights block inside the concatenated layer."""
        return self.arch.conv_size + self.arch.forecast_size

    def backward(
        self, cache: ForwardCache, grad_out: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Reverse pass for a scalar loss with gradient ``grad_out`` at the output.

        Returns:
            (gradient w.r.t. the flat parameters, gradient w.r.t. the
            current-weights input)
        """
        arch, p = self.arch, self.layers()
        grad = np.zeros_like(self.params)
        g = self.layers(grad)

        out = cache.out
        ga3 = out * (grad_out - out @ grad_out)
        g["w3"][:] = np.outer(ga3, cache.h2)
        g["b3"][:] = ga3
        ga2 = (p["w3"].T @ ga3) * (cache.a2 > 0)
        g["w2"][:] = np.outer(ga2, cache.h1)
        g["b2"][:] = ga2
        ga1 = (p["w2"].T @ ga2) * (cache.a1 > 0)
        g["w1"][:] = np.outer(ga1, cache.h0)
        g["b1"][:] = ga1
        gh0 = p["w1"].T @ ga1

        if arch.variant.uses_window:
            g_maps = gh0[: arch.conv_size].reshape(arch.k_maps, arch.conv_length).T
            g_pre = g_maps * (cache.conv_pre > 0)
            g["conv_kernel"][:] = g_pre.T @ cache.patches
            g["conv_bias"][:] = g_pre.sum(axis=0)

        start = self.weights_offset()
        return grad, gh0[start : start + arch.n_assets].copy()

    # --- Persistence ---

    def save(self, path: Union[str, Path]) -> None:
        """
        Write a JSON architecture header line followed by one hex float per line.
        """
        header = {"format": FILE_FORMAT, "version": FILE_VERSION, **self.arch.to_dict()}
        header["n_params"] = self.arch.n_params
        lines = [json.dumps(header, sort_keys=True)]
        lines += [float(v).hex() for v in self.params]
        Path(path).write_text("\n".join(lines) + "\n")
        logger.debug("Saved %s network (%d parameters) to %s", self.variant.value, len(self.params), path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PolicyNetwork":
        """
        Read a network written by ``save``; outputs are bit-identical.

        Raises:
            ValueError: Unknown format or parameter count mismatch
        """
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise ValueError(f"{path}: empty network file")
        header = json.loads(lines[0])
        if header.get("format") != FILE_FORMAT:
            raise ValueError(f"{path}: not a policy network file")
        arch = Architecture(
            variant=Variant(header["variant"]),
            n_assets=header["n_assets"],
            lookback=header["lookback"],
            conv_width=header["conv_width"],
            horizon=header["horizon"],
            k_maps=header["k_maps"],
        )
        values = [float.fromhex(line) for line in lines[1:] if line]
        if len(values) != arch.n_params or header.get("n_params") != arch.n_params:
            raise ValueError(
                f"{path}: expected {arch.n_params} parameters, found {len(values)}"
            )
        return cls(arch, np.array(values))
