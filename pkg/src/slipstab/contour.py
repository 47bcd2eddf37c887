"""Filled-contour SVG rendering of a fitted response surface.

Band polygons are extracted from matplotlib's contour machinery and the
SVG document itself is written directly, so the output is a small,
standalone, well-formed XML file. Annotations follow the two-dot scheme:
a filled marker at the surface optimum, an open marker at the best
measured grid condition, and a dashed box spanning the bootstrap
confidence intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as _plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402

from .errors import DataError  # noqa: E402

N_BANDS = 10
_WIDTH, _HEIGHT = 640.0, 480.0
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 80.0, 30.0, 40.0, 60.0
_COLORS = (
    "#30123b", "#4458cb", "#3e9bfe", "#18d6cb", "#46f884",
    "#a2fc3c", "#e1dd37", "#fea130", "#ef5a11", "#c42502",
)


@dataclass(frozen=True)
class ContourBand:
    lower: float
    upper: float
    polygons: tuple[np.ndarray, ...]  # each (k, 2) in data coordinates

    def contains(self, point) -> bool:
        """True when the point falls inside any polygon of this band."""
        from matplotlib.path import Path

        return any(Path(p).contains_point(point) for p in self.polygons)


def contour_bands(
    magnitudes: np.ndarray,
    durations: np.ndarray,
    values: np.ndarray,
    n_bands: int = N_BANDS,
) -> list[ContourBand]:
    """Filled-contour band polygons for values[magnitude, duration].

    A constant grid yields a single band covering the whole domain.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (len(magnitudes), len(durations)):
        raise DataError(
            f"grid shape {values.shape} does not match axes "
            f"({len(magnitudes)}, {len(durations)})"
        )
    vmin, vmax = float(values.min()), float(values.max())
    if vmax - vmin <= 1e-12 * max(abs(vmin), abs(vmax), 1.0):
        domain = np.array(
            [
                [magnitudes[0], durations[0]],
                [magnitudes[-1], durations[0]],
                [magnitudes[-1], durations[-1]],
                [magnitudes[0], durations[-1]],
            ]
        )
        return [ContourBand(lower=vmin, upper=vmax, polygons=(domain,))]

    levels = np.linspace(vmin, vmax, n_bands + 1)
    fig, ax = _plt.subplots()
    try:
        cs = ax.contourf(magnitudes, durations, values.T, levels=levels)
        bands = []
        for i, path in enumerate(cs.get_paths()):
            polys = tuple(np.asarray(p) for p in path.to_polygons() if len(p) >= 3)
            bands.append(
                ContourBand(lower=float(levels[i]), upper=float(levels[i + 1]), polygons=polys)
            )
    finally:
        _plt.close(fig)
    return bands


def _scaler(magnitudes, durations):
    x0, x1 = float(magnitudes[0]), float(magnitudes[-1])
    y0, y1 = float(durations[0]), float(durations[-1])
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def to_px(m, d):
        px = _MARGIN_L + (m - x0) / (x1 - x0) * plot_w
        py = _HEIGHT - _MARGIN_B - (d - y0) / (y1 - y0) * plot_h
        return px, py

    return to_px


def _poly_path(poly: np.ndarray, to_px) -> str:
    pts = [to_px(m, d) for m, d in poly]
    head = f"M {pts[0][0]:.2f} {pts[0][1]:.2f} "
    return head + " ".join(f"L {x:.2f} {y:.2f}" for x, y in pts[1:]) + " Z"


def emit_contour_svg(
    magnitudes: np.ndarray,
    durations: np.ndarray,
    values: np.ndarray,
    optimum: tuple[float, float] | None = None,
    best_condition: tuple[float, float] | None = None,
    ci_magnitude: tuple[float, float] | None = None,
    ci_duration: tuple[float, float] | None = None,
    title: str = "Outcome response surface",
) -> str:
    """Standalone SVG with filled contour bands and optimum annotations."""
    bands = contour_bands(magnitudes, durations, values)
    flat = len(bands) == 1
    to_px = _scaler(magnitudes, durations)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH:.0f}" '
        f'height="{_HEIGHT:.0f}" viewBox="0 0 {_WIDTH:.0f} {_HEIGHT:.0f}">',
        f'<rect width="{_WIDTH:.0f}" height="{_HEIGHT:.0f}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{escape(title)}</text>',
    ]
    for i, band in enumerate(bands):
        color = _COLORS[min(i, len(_COLORS) - 1)] if not flat else _COLORS[4]
        for poly in band.polygons:
            parts.append(
                f'<path d="{_poly_path(poly, to_px)}" fill="{color}" stroke="none"/>'
            )
    if flat:
        parts.append(
            f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT / 2:.0f}" text-anchor="middle" '
            'font-family="sans-serif" font-size="14">constant surface: single band</text>'
        )

    # plot frame and axis labels
    x0, y0 = to_px(magnitudes[0], durations[0])
    x1, y1 = to_px(magnitudes[-1], durations[-1])
    parts.append(
        f'<rect x="{min(x0, x1):.2f}" y="{min(y0, y1):.2f}" '
        f'width="{abs(x1 - x0):.2f}" height="{abs(y1 - y0):.2f}" '
        'fill="none" stroke="black" stroke-width="1"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        m = magnitudes[0] + frac * (magnitudes[-1] - magnitudes[0])
        d = durations[0] + frac * (durations[-1] - durations[0])
        px, _ = to_px(m, durations[0])
        parts.append(
            f'<text x="{px:.1f}" y="{_HEIGHT - _MARGIN_B + 18:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{100 * m:.0f}</text>'
        )
        _, py = to_px(magnitudes[0], d)
        parts.append(
            f'<text x="{_MARGIN_L - 8:.1f}" y="{py + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{d:g}</text>'
        )
    parts.append(
        f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 14:.0f}" text-anchor="middle" '
        'font-family="sans-serif" font-size="13">'
        "Assistance magnitude (% peak hip extension moment)</text>"
    )
    parts.append(
        f'<text x="20" y="{_HEIGHT / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 20 {_HEIGHT / 2:.0f})">'
        "Assistance duration (x perturbation length)</text>"
    )

    if ci_magnitude is not None and ci_duration is not None:
        ax0, ay0 = to_px(ci_magnitude[0], ci_duration[1])
        ax1, ay1 = to_px(ci_magnitude[1], ci_duration[0])
        parts.append(
            f'<rect x="{ax0:.2f}" y="{ay0:.2f}" width="{ax1 - ax0:.2f}" '
            f'height="{ay1 - ay0:.2f}" fill="none" stroke="white" '
            'stroke-width="1.5" stroke-dasharray="6 4"/>'
        )
    if optimum is not None:
        px, py = to_px(*optimum)
        parts.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="6" fill="white" stroke="black" '
            'stroke-width="1.5"/>'
        )
    if best_condition is not None:
        px, py = to_px(*best_condition)
        parts.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="6" fill="none" stroke="white" '
            'stroke-width="2"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
