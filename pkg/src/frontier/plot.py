"""
Risk-return charts of sweep results.

Each family gets a scatter of its (excess risk, excess return) points, its
Pareto line and, when available, its mean frontier with the confidence
band. SVG output is plain text built in a fixed order, so identical inputs
give byte-identical files. PNG output goes through Pillow.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, ImageDraw

from .sweep import FrontierPoint, MeanFrontier, family_name, pareto_filter

WIDTH = 800
HEIGHT = 560
MARGIN_LEFT = 80
MARGIN_RIGHT = 170
MARGIN_TOP = 40
MARGIN_BOTTOM = 60
TICKS = 5

PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#e377c2",
)


@dataclass(frozen=True)
class ChartSeries:
    """One family's data on the chart."""

    name: str
    risks: np.ndarray
    returns: np.ndarray
    pareto_risks: np.ndarray
    pareto_returns: np.ndarray
    mean: Optional[MeanFrontier] = None


def build_series(
    points: Sequence[FrontierPoint], means: Sequence[MeanFrontier] = ()
) -> list[ChartSeries]:
    """Group points by family (sorted by name) and attach Pareto lines and means."""
    groups: dict[str, list[FrontierPoint]] = {}
    for p in points:
        groups.setdefault(family_name(p.family, p.variant), []).append(p)
    by_family = {m.family: m for m in means}
    series = []
    for name in sorted(groups):
        group = groups[name]
        frontier = pareto_filter(group)
        series.append(
            ChartSeries(
                name=name,
                risks=np.array([p.excess_risk for p in group]),
                returns=np.array([p.excess_return for p in group]),
                pareto_risks=frontier.risks,
                pareto_returns=frontier.returns,
                mean=by_family.get(name),
            )
        )
    return series


class _Frame:
    """Maps data coordinates (percent) to pixels."""

    def __init__(self, series: Sequence[ChartSeries], width: int, height: int):
        xs = [s.risks for s in series] + [s.mean.grid for s in series if s.mean is not None]
        ys = [s.returns for s in series]
        ys += [np.concatenate([s.mean.ci_low, s.mean.ci_high]) for s in series if s.mean is not None]
        x = np.concatenate(xs) * 100 if xs else np.zeros(1)
        y = np.concatenate(ys) * 100 if ys else np.zeros(1)
        self.x0, self.x1 = _padded_range(x)
        self.y0, self.y1 = _padded_range(y)
        self.width, self.height = width, height
        self.left, self.right = MARGIN_LEFT, width - MARGIN_RIGHT
        self.top, self.bottom = MARGIN_TOP, height - MARGIN_BOTTOM

    def px(self, risk: float) -> float:
        return self.left + (risk * 100 - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def py(self, ret: float) -> float:
        return self.bottom - (ret * 100 - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def x_ticks(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, TICKS)

    def y_ticks(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, TICKS)


def _padded_range(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo
    pad = span * 0.05 if span > 0 else max(abs(lo) * 0.1, 1e-3)
    return lo - pad, hi + pad


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _tick_label(value: float) -> str:
    return f"{value:.3g}"


def render_svg(
    series: Sequence[ChartSeries],
    width: int = WIDTH,
    height: int = HEIGHT,
    title: str = "Excess return vs excess risk",
) -> str:
    """SVG document for ``series``; deterministic for equal inputs."""
    frame = _Frame(series, width, height)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="15">{title}</text>',
        f'<rect x="{frame.left}" y="{frame.top}" width="{frame.right - frame.left}" '
        f'height="{frame.bottom - frame.top}" fill="none" stroke="black"/>',
    ]

    for value in frame.x_ticks():
        x = frame.left + (value - frame.x0) / (frame.x1 - frame.x0) * (frame.right - frame.left)
        out.append(
            f'<line x1="{_fmt(x)}" y1="{frame.bottom}" x2="{_fmt(x)}" y2="{frame.bottom + 5}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_fmt(x)}" y="{frame.bottom + 20}" text-anchor="middle">{_tick_label(value)}</text>'
        )
    for value in frame.y_ticks():
        y = frame.bottom - (value - frame.y0) / (frame.y1 - frame.y0) * (frame.bottom - frame.top)
        out.append(
            f'<line x1="{frame.left - 5}" y1="{_fmt(y)}" x2="{frame.left}" y2="{_fmt(y)}" stroke="black"/>'
        )
        out.append(
            f'<text x="{frame.left - 8}" y="{_fmt(y + 4)}" text-anchor="end">{_tick_label(value)}</text>'
        )
    out.append(
        f'<text x="{(frame.left + frame.right) / 2:.0f}" y="{height - 15}" '
        f'text-anchor="middle">Excess risk (% per day)</text>'
    )
    out.append(
        f'<text x="20" y="{(frame.top + frame.bottom) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {(frame.top + frame.bottom) / 2:.0f})">'
        f"Excess return (% per day)</text>"
    )

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        if s.mean is not None:
            band = [(frame.px(r), frame.py(v)) for r, v in zip(s.mean.grid, s.mean.ci_high)]
            band += [(frame.px(r), frame.py(v)) for r, v in zip(s.mean.grid[::-1], s.mean.ci_low[::-1])]
            out.append(
                f'<polygon points="{_points(band)}" fill="{color}" fill-opacity="0.15" stroke="none"/>'
            )
            mean_line = [(frame.px(r), frame.py(v)) for r, v in zip(s.mean.grid, s.mean.mean)]
            out.append(
                f'<polyline points="{_points(mean_line)}" fill="none" stroke="{color}" '
                f'stroke-dasharray="6 3" stroke-width="1.5"/>'
            )
        for r, v in zip(s.risks, s.returns):
            out.append(
                f'<circle cx="{_fmt(frame.px(r))}" cy="{_fmt(frame.py(v))}" r="2.5" '
                f'fill="{color}" fill-opacity="0.5"/>'
            )
        line = [(frame.px(r), frame.py(v)) for r, v in zip(s.pareto_risks, s.pareto_returns)]
        out.append(f'<polyline points="{_points(line)}" fill="none" stroke="{color}" stroke-width="2"/>')

        ly = frame.top + 10 + 20 * i
        out.append(
            f'<line x1="{frame.right + 15}" y1="{ly}" x2="{frame.right + 35}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{frame.right + 40}" y="{ly + 4}">{s.name}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"


def _points(coords) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)


def render_png(
    series: Sequence[ChartSeries], width: int = WIDTH, height: int = HEIGHT
) -> Image.Image:
    """Raster version of the chart (no text rendering beyond the default font)."""
    frame = _Frame(series, width, height)
    img = Image.new("RGB", (width, height), color="white")
    draw = ImageDraw.Draw(img)

    draw.rectangle([frame.left, frame.top, frame.right, frame.bottom], outline="black", width=1)
    for value in frame.x_ticks():
        x = frame.left + (value - frame.x0) / (frame.x1 - frame.x0) * (frame.right - frame.left)
        draw.line([(x, frame.bottom), (x, frame.bottom + 5)], fill="black")
        draw.text((x - 10, frame.bottom + 10), _tick_label(value), fill="black")
    for value in frame.y_ticks():
        y = frame.bottom - (value - frame.y0) / (frame.y1 - frame.y0) * (frame.bottom - frame.top)
        draw.line([(frame.left - 5, y), (frame.left, y)], fill="black")
        draw.text((frame.left - 45, y - 6), _tick_label(value), fill="black")

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        if s.mean is not None:
            mean_line = [(frame.px(r), frame.py(v)) for r, v in zip(s.mean.grid, s.mean.mean)]
            for bound in (s.mean.ci_low, s.mean.ci_high):
                draw.line([(frame.px(r), frame.py(v)) for r, v in zip(s.mean.grid, bound)], fill=color)
            draw.line(mean_line, fill=color, width=2)
        for r, v in zip(s.risks, s.returns):
            cx, cy = frame.px(r), frame.py(v)
            draw.ellipse([cx - 2, cy - 2, cx + 2, cy + 2], fill=color)
        line = [(frame.px(r), frame.py(v)) for r, v in zip(s.pareto_risks, s.pareto_returns)]
        if len(line) > 1:
            draw.line(line, fill=color, width=2)
        ly = frame.top + 10 + 20 * i
        draw.line([(frame.right + 15, ly), (frame.right + 35, ly)], fill=color, width=2)
        draw.text((frame.right + 40, ly - 6), s.name, fill="black")
    return img


def write_chart(
    points: Sequence[FrontierPoint],
    path: Union[str, Path],
    means: Sequence[MeanFrontier] = (),
    png: bool = False,
) -> list[Path]:
    """
    Write ``path`` (SVG) and, with ``png``, a PNG next to it.

    Returns:
        Paths written
    """
    series = build_series(points, means)
    path = Path(path)
    path.write_text(render_svg(series))
    written = [path]
    if png:
        png_path = path.with_suffix(".png")
        render_png(series).save(png_path)
        written.append(png_path)
    return written
