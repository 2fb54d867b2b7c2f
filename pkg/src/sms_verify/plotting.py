# src/sms_verify/plotting.py
"""
Minimal SVG line charts for traces and sweeps (axes, ticks, one polyline per series).
"""
import logging
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Mapping, Sequence

from .errors import InputError

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 400
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 60, 150, 40, 50
MAX_X_TICKS = 11
Y_TICKS = 5
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") if math.isfinite(v) else "nan"


def _x_ticks(xs: Sequence[float]) -> list[float]:
    distinct = sorted(set(xs))
    if len(distinct) <= MAX_X_TICKS:
        return distinct
    lo, hi = distinct[0], distinct[-1]
    return [lo + (hi - lo) * i / (MAX_X_TICKS - 1) for i in range(MAX_X_TICKS)]


def line_chart(
    xs: Sequence[float],
    series: Mapping[str, Sequence[float | None]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> str:
    """
    Render series against xs as an SVG document.

    Note:
        None values are gaps; a series with no values is left out of the plot
        but kept in the legend. A constant series renders as a flat polyline.
    """
    if not xs:
        raise InputError("line_chart needs at least one x value")
    for name, values in series.items():
        if len(values) != len(xs):
            raise InputError(f"series '{name}' has {len(values)} values for {len(xs)} x values")

    ys = [v for values in series.values() for v in values if v is not None]
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = min(xs), max(xs)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> float:
        return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h

    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        version="1.1",
        width=str(WIDTH),
        height=str(HEIGHT),
        viewBox=f"0 0 {WIDTH} {HEIGHT}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="#ffffff")
    if title:
        ET.SubElement(svg, "text", {"x": str(WIDTH / 2), "y": "20", "text-anchor": "middle"}).text = title

    axes = ET.SubElement(svg, "g", {"class": "axes", "stroke": "#000000"})
    bottom, right = MARGIN_TOP + plot_h, MARGIN_LEFT + plot_w
    ET.SubElement(axes, "line", x1=str(MARGIN_LEFT), y1=str(bottom), x2=str(right), y2=str(bottom))
    ET.SubElement(axes, "line", x1=str(MARGIN_LEFT), y1=str(MARGIN_TOP), x2=str(MARGIN_LEFT), y2=str(bottom))

    for x in _x_ticks(xs):
        ET.SubElement(axes, "line", {"class": "x-tick", "x1": f"{px(x):.2f}", "y1": str(bottom),
                                     "x2": f"{px(x):.2f}", "y2": str(bottom + 5)})
        label = ET.SubElement(svg, "text", {"x": f"{px(x):.2f}", "y": str(bottom + 18),
                                            "text-anchor": "middle", "font-size": "11"})
        label.text = _fmt(x)
    for i in range(Y_TICKS):
        y = y_lo + (y_hi - y_lo) * i / (Y_TICKS - 1)
        ET.SubElement(axes, "line", {"class": "y-tick", "x1": str(MARGIN_LEFT - 5), "y1": f"{py(y):.2f}",
                                     "x2": str(MARGIN_LEFT), "y2": f"{py(y):.2f}"})
        label = ET.SubElement(svg, "text", {"x": str(MARGIN_LEFT - 8), "y": f"{py(y) + 4:.2f}",
                                            "text-anchor": "end", "font-size": "11"})
        label.text = _fmt(y)

    if x_label:
        ET.SubElement(svg, "text", {"x": str(MARGIN_LEFT + plot_w / 2), "y": str(HEIGHT - 10),
                                    "text-anchor": "middle"}).text = x_label
    if y_label:
        ET.SubElement(svg, "text", {"x": "15", "y": str(MARGIN_TOP + plot_h / 2), "text-anchor": "middle",
                                    "transform": f"rotate(-90 15 {MARGIN_TOP + plot_h / 2})"}).text = y_label

    for n, (name, values) in enumerate(series.items()):
        color = PALETTE[n % len(PALETTE)]
        points = [f"{px(x):.2f},{py(v):.2f}" for x, v in zip(xs, values) if v is not None]
        if points:
            ET.SubElement(svg, "polyline", {"class": "series", "data-name": name, "points": " ".join(points),
                                            "fill": "none", "stroke": color, "stroke-width": "2"})
        legend_y = MARGIN_TOP + 18 * n
        ET.SubElement(svg, "line", x1=str(right + 10), y1=str(legend_y), x2=str(right + 30), y2=str(legend_y),
                      stroke=color, **{"stroke-width": "2"})
        ET.SubElement(svg, "text", {"x": str(right + 35), "y": str(legend_y + 4), "font-size": "12"}).text = name

    return ET.tostring(svg, encoding="unicode")


def write_svg(svg: str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(svg)
    logger.info(f"wrote {path}")
    return path
