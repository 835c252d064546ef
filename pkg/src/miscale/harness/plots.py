"""Static figures: MI curves as hand-built SVG, covariance rows and sample tiles as images."""

import html
import json
import math
import re
from pathlib import Path

import numpy as np

from ..estimator import read_curve_csv
from ..grid import GridShape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=150, top=30, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
_META_RE = re.compile(r'<metadata id="miscale-series">(.*?)</metadata>', re.S)


def _nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt_tick(v):
    s = f"{v:.6g}"
    return "0" if s in ("-0", "0") else s


def read_series(svg_path):
    """Series embedded by an earlier :func:`plot_curve` call, or an empty list."""
    path = Path(svg_path)
    if not path.exists():
        return []
    m = _META_RE.search(path.read_text(encoding="utf-8"))
    if not m:
        return []
    return json.loads(html.unescape(m.group(1)))


def _clean(v):
    return None if v is None or not math.isfinite(v) else float(v)


def plot_curve(csv_path, svg_path, band=True, series=None, overlay=False):
    """Render a curve CSV as a static SVG 1.1 line plot.

    Parameters
    ----------
    csv_path, svg_path : path-like
    band : bool
        Shade ``mean +- std``.
    series : str, optional
        Legend name; defaults to the CSV's readout tag.
    overlay : bool
        Keep series already drawn in ``svg_path``; a series with the same
        name is replaced.

    Raises
    ------
    FormatError
        When the CSV does not follow the curve schema.
    """
    table = read_curve_csv(csv_path)
    name = series or (table.readout[0] if table.readout else "curve")
    new = {
        "name": name,
        "band": bool(band),
        "L": [int(v) for v in table.L],
        "mean": [_clean(v) for v in table.mean],
        "std": [_clean(v) for v in table.std],
    }
    existing = [s for s in read_series(svg_path) if s["name"] != name] if overlay else []
    all_series = existing + [new]
    Path(svg_path).write_text(render_svg(all_series), encoding="utf-8")
    return all_series


def render_svg(all_series):
    pts_x, pts_y = [], []
    for s in all_series:
        for L, m, sd in zip(s["L"], s["mean"], s["std"]):
            if m is None:
                continue
            pts_x.append(L)
            spread = sd if (s["band"] and sd is not None) else 0.0
            pts_y.extend([m - spread, m + spread])
    if pts_x:
        x_lo, x_hi = min(pts_x), max(pts_x)
        y_lo, y_hi = min(0.0, min(pts_y)), max(pts_y)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    y_hi += 0.05 * (y_hi - y_lo)

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<metadata id="miscale-series">' + html.escape(json.dumps(all_series, sort_keys=True)) + "</metadata>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<g stroke="black" stroke-width="1" fill="none">'
               f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}"/>'
               f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}"/></g>')
    out.append('<g font-family="sans-serif" font-size="12" fill="black">')
    for t in _nice_ticks(x_lo, x_hi):
        X = sx(t)
        out.append(f'<line x1="{X:.2f}" y1="{y0}" x2="{X:.2f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{y0 + 18}" text-anchor="middle">{_fmt_tick(t)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        Y = sy(t)
        out.append(f'<line x1="{x0 - 5}" y1="{Y:.2f}" x2="{x0}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt_tick(t)}</text>')
    out.append(f'<text x="{x0 + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle" font-size="14">L</text>')
    cy = MARGIN["top"] + ph / 2
    out.append(f'<text x="18" y="{cy:.2f}" text-anchor="middle" font-size="14" '
               f'transform="rotate(-90 18 {cy:.2f})">MI (nats)</text>')
    out.append("</g>")

    for k, s in enumerate(all_series):
        color = PALETTE[k % len(PALETTE)]
        pts = [(L, m, sd) for L, m, sd in zip(s["L"], s["mean"], s["std"]) if m is not None]
        out.append(f'<g id="series-{k}">')
        if s["band"] and pts:
            upper = [(sx(L), sy(m + (sd or 0.0))) for L, m, sd in pts]
            lower = [(sx(L), sy(m - (sd or 0.0))) for L, m, sd in reversed(pts)]
            poly = " ".join(f"{x:.2f},{y:.2f}" for x, y in upper + lower)
            out.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.25" stroke="none"/>')
        if len(pts) > 1:
            line = " ".join(f"{sx(L):.2f},{sy(m):.2f}" for L, m, _ in pts)
            out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        for L, m, _ in pts:
            out.append(f'<circle cx="{sx(L):.2f}" cy="{sy(m):.2f}" r="3" fill="{color}"/>')
        ly = MARGIN["top"] + 10 + 20 * k
        lx = WIDTH - MARGIN["right"] + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-family="sans-serif" font-size="12">'
                   f"{html.escape(s['name'])}</text>")
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _save_figure(fig, path):
    import matplotlib

    path = str(path)
    if path.endswith(".svg"):
        with matplotlib.rc_context({"svg.hashsalt": "miscale"}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    else:
        fig.savefig(path, format="png", metadata={"Software": None}, dpi=100)


def plot_covariance_row(cov, shape, pivot, path):
    """Heat image of ``|cov[pivot, j]|`` over the grid, pivot outlined in red.

    Brighter cells carry larger covariance magnitude.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    cov = getattr(cov, "covariance", cov)
    cov = np.asarray(cov, dtype=np.float64)
    shape = GridShape.parse(shape)
    if cov.shape != (shape.total, shape.total):
        raise ValueError(f"covariance is {cov.shape}, grid {shape} needs {shape.total} variables")
    if not 0 <= pivot < shape.total:
        raise ValueError(f"pivot {pivot} outside 0..{shape.total - 1}")
    img = np.abs(cov[pivot]).reshape(shape.height, shape.width)
    fig, ax = plt.subplots(figsize=(4, 4 * shape.height / shape.width + 0.3))
    im = ax.imshow(img, cmap="viridis", interpolation="nearest")
    r, c = divmod(int(pivot), shape.width)
    ax.add_patch(Rectangle((c - 0.5, r - 0.5), 1, 1, fill=False, edgecolor="red", linewidth=1.5))
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    _save_figure(fig, path)
    plt.close(fig)
    return img


def sample_tiles(samples, shape, ncols=None):
    """Tile rows of ``samples`` into one grayscale array, each tile min-max scaled."""
    shape = GridShape.parse(shape)
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    count = X.shape[0]
    ncols = ncols or int(math.ceil(math.sqrt(count)))
    nrows = int(math.ceil(count / ncols))
    pad = 1
    canvas = np.ones((nrows * (shape.height + pad) + pad, ncols * (shape.width + pad) + pad))
    for k, row in enumerate(X):
        lo, hi = row.min(), row.max()
        tile = (row - lo) / (hi - lo) if hi > lo else np.zeros_like(row)
        r, c = divmod(k, ncols)
        y = pad + r * (shape.height + pad)
        x = pad + c * (shape.width + pad)
        canvas[y:y + shape.height, x:x + shape.width] = tile.reshape(shape.height, shape.width)
    return canvas


def render_samples(samples, shape, path, ncols=None, scale=4):
    """Write a PNG grid of sample tiles, ``scale`` pixels per grid cell."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib.image import imsave

    canvas = sample_tiles(samples, shape, ncols)
    big = np.kron(canvas, np.ones((scale, scale)))
    imsave(str(path), big, cmap="gray", vmin=0.0, vmax=1.0, format="png", metadata={"Software": None})
    return canvas
