"""Dependency-free SVG heatmaps and interval line plots."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .grid import DomainGrid

# 9-step sequential ramp, light to dark
RAMP = ("#fff7ec", "#fee8c8", "#fdd49e", "#fdbb84", "#fc8d59",
        "#ef6548", "#d7301f", "#b30000", "#7f0000")
MISSING = "#d9d9d9"
LINE_COLORS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")


def fmt(v: float) -> str:
    """Stable short number formatting for coordinates and labels."""
    if not np.isfinite(v):
        return "nan"
    s = f"{v:.4g}"
    return "0" if s in ("-0", "-0.0") else s


def _coord(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _svg(width, height, body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_coord(width)}" '
            f'height="{_coord(height)}" viewBox="0 0 {_coord(width)} {_coord(height)}">')
    return "\n".join([head, f"<title>{escape(title)}</title>", *body, "</svg>", ""])


def _text(x, y, s, size=10, anchor="start", rotate=None):
    tr = f' transform="rotate({rotate} {_coord(x)} {_coord(y)})"' if rotate is not None else ""
    return (f'<text x="{_coord(x)}" y="{_coord(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}"{tr}>{escape(s)}</text>')


def ramp_index(values, vmin, vmax) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if vmax <= vmin:
        return np.where(np.isfinite(v), len(RAMP) // 2, -1)
    z = (v - vmin) / (vmax - vmin)
    idx = np.clip(np.floor(z * len(RAMP)), 0, len(RAMP) - 1)
    return np.where(np.isfinite(v), idx, -1).astype(int)


def heatmap(values: np.ndarray, grid: DomainGrid, title: str = "", label: str = "",
            cell: float = 12.0) -> str:
    """Heatmap with age on the vertical axis (youngest at the bottom) and year across.

    Exactly one ``rect`` per grid cell; the legend uses polygons so the
    rect count stays equal to the number of cells.
    """
    v = np.asarray(values, dtype=float).reshape(grid.shape)
    finite = v[np.isfinite(v)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(finite.max()) if finite.size else 0.0
    idx = ramp_index(v, vmin, vmax)
    left, top = 50.0, 30.0
    w, h = grid.n_years * cell, grid.n_ages * cell
    legend_x = left + w + 20
    body = [_text(left, 18, title, 12)]
    for i, age in enumerate(grid.ages):
        y = top + (grid.n_ages - 1 - i) * cell
        for j, year in enumerate(grid.years):
            k = idx[i, j]
            fill = MISSING if k < 0 else RAMP[k]
            body.append(f'<rect x="{_coord(left + j * cell)}" y="{_coord(y)}" '
                        f'width="{_coord(cell)}" height="{_coord(cell)}" fill="{fill}">'
                        f'<title>age {age}, {year}: {fmt(v[i, j])}</title></rect>')
        if age % 5 == 0:
            body.append(_text(left - 4, y + cell * 0.8, str(age), 9, "end"))
    for j, year in enumerate(grid.years):
        if year % 5 == 0:
            body.append(_text(left + (j + 0.5) * cell, top + h + 12, str(year), 9, "middle"))
    body.append(_text(left + w / 2, top + h + 26, "calendar year", 10, "middle"))
    body.append(_text(14, top + h / 2, "age", 10, "middle", rotate=-90))
    sw = h / len(RAMP)
    for k, colour in enumerate(RAMP):
        y0 = top + h - (k + 1) * sw
        pts = [(legend_x, y0), (legend_x + 14, y0), (legend_x + 14, y0 + sw), (legend_x, y0 + sw)]
        body.append('<polygon points="' + " ".join(f"{_coord(a)},{_coord(b)}" for a, b in pts)
                    + f'" fill="{colour}"/>')
    for k in range(len(RAMP) + 1):
        tick = vmin + (vmax - vmin) * k / len(RAMP)
        body.append(_text(legend_x + 18, top + h - k * sw + 3, fmt(tick), 8))
    body.append(_text(legend_x, top - 6, label, 9))
    body.append(_text(legend_x, top + h + 26, f"min {fmt(vmin)} max {fmt(vmax)}", 8))
    return _svg(legend_x + 80, top + h + 40, body, title)


def interval_plot(x, series: dict[str, tuple], title: str = "", xlabel: str = "year",
                  ylabel: str = "", marker_x: float | None = None) -> str:
    """Lines with pointwise interval bands; ``series`` maps a label to ``(mean, lo, hi)``."""
    x = np.asarray(x, dtype=float)
    allv = np.concatenate([np.asarray(s, dtype=float).ravel() for t in series.values() for s in t])
    allv = allv[np.isfinite(allv)]
    ylo, yhi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if yhi <= ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    left, top, w, h = 60.0, 30.0, 420.0, 240.0
    xlo, xhi = float(x.min()), float(x.max())
    xspan = xhi - xlo if xhi > xlo else 1.0
    px = lambda v: left + (v - xlo) / xspan * w
    py = lambda v: top + h - (v - ylo) / (yhi - ylo) * h
    body = [_text(left, 18, title, 12),
            f'<line x1="{_coord(left)}" y1="{_coord(top + h)}" x2="{_coord(left + w)}" '
            f'y2="{_coord(top + h)}" stroke="#000"/>',
            f'<line x1="{_coord(left)}" y1="{_coord(top)}" x2="{_coord(left)}" '
            f'y2="{_coord(top + h)}" stroke="#000"/>']
    for k in range(5):
        v = ylo + (yhi - ylo) * k / 4
        body.append(_text(left - 4, py(v) + 3, fmt(v), 8, "end"))
    for v in np.unique(np.round(np.linspace(xlo, xhi, 6))):
        body.append(_text(px(v), top + h + 12, fmt(v), 8, "middle"))
    body.append(_text(left + w / 2, top + h + 28, xlabel, 10, "middle"))
    body.append(_text(16, top + h / 2, ylabel, 10, "middle", rotate=-90))
    if marker_x is not None:
        body.append(f'<line x1="{_coord(px(marker_x))}" y1="{_coord(top)}" '
                    f'x2="{_coord(px(marker_x))}" y2="{_coord(top + h)}" stroke="#888" '
                    f'stroke-dasharray="4 3"/>')
    for c, (name, (mean, lo, hi)) in enumerate(series.items()):
        colour = LINE_COLORS[c % len(LINE_COLORS)]
        mean, lo, hi = (np.asarray(s, dtype=float) for s in (mean, lo, hi))
        ok = np.isfinite(mean) & np.isfinite(lo) & np.isfinite(hi)
        if not np.any(ok):
            continue
        xs = x[ok]
        band = [(px(a), py(b)) for a, b in zip(xs, hi[ok])] + \
               [(px(a), py(b)) for a, b in zip(xs[::-1], lo[ok][::-1])]
        body.append('<polygon points="' + " ".join(f"{_coord(a)},{_coord(b)}" for a, b in band)
                    + f'" fill="{colour}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{_coord(px(a))},{_coord(py(b))}" for a, b in zip(xs, mean[ok]))
        body.append(f'<polyline points="{line}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        body.append(_text(left + w + 8, top + 12 + 14 * c, name, 9))
        body.append(f'<line x1="{_coord(left + w - 2)}" y1="{_coord(top + 9 + 14 * c)}" '
                    f'x2="{_coord(left + w + 6)}" y2="{_coord(top + 9 + 14 * c)}" '
                    f'stroke="{colour}" stroke-width="2"/>')
    return _svg(left + w + 90, top + h + 40, body, title)


def write(path, text: str):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
