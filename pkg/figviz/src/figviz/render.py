"""Matplotlib builders for the six figure kinds.

All science numbers come from the input tables; drawing adds only axis
transforms and the standard-quantum-limit / Heisenberg-limit guide lines on
scaling plots. Output is PNG with the toolchain metadata stripped so that
re-rendering identical tables yields byte-identical files.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from figviz.schemas import Table

FIGSIZE = (6.4, 4.8)
WIDE_FIGSIZE = (9.6, 4.8)
SQL_STYLE = {"color": "0.6", "linestyle": "-", "linewidth": 1.2}
HL_STYLE = {"color": "black", "linestyle": "--", "linewidth": 1.2}


@dataclass(frozen=True)
class Style:
    title: Optional[str] = None
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    logy: bool = False
    references: bool = True
    projection: bool = False
    dpi: int = 150


def reference_exponents(xs, ys) -> tuple:
    """Guide-line slopes (SQL, HL); the sign follows the data trend.

    Information-like quantities grow with N, so the guides are +1 and +2;
    uncertainty-like quantities shrink, flipping both signs.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    good = np.isfinite(xs) & np.isfinite(ys) & (xs > 0) & (ys > 0)
    if np.count_nonzero(good) < 2 or ys[good][-1] >= ys[good][0]:
        return 1.0, 2.0
    return -1.0, -2.0


def _finish(ax, style: Style, default_x: str, default_y: str, title: str):
    ax.set_xlabel(style.xlabel or default_x)
    ax.set_ylabel(style.ylabel or default_y)
    ax.set_title(style.title or title)


def build_poincare_scatter(tables: Sequence[Table], style: Style):
    cols = tables[0].columns
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.scatter(cols["phi"], cols["z"], s=0.5, c=cols["seed_index"] % 20,
               cmap="tab20", vmin=0, vmax=19, linewidths=0)
    ax.set_xlim(0.0, 2 * math.pi)
    ax.set_ylim(-1.02, 1.02)
    _finish(ax, style, "phi", "z", "stroboscopic section")
    return fig


def _pivot(xcol, ycol, values):
    """Scattered (x, y, value) rows onto a dense grid; gaps stay NaN."""
    ux = np.unique(xcol)
    uy = np.unique(ycol)
    grid = np.full((ux.size, uy.size), np.nan)
    grid[np.searchsorted(ux, xcol), np.searchsorted(uy, ycol)] = values
    return ux, uy, grid


def build_phase_heatmap(tables: Sequence[Table], style: Style):
    table = tables[0]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    if table.schema == "operator matrix":
        rows = table.columns["row"].astype(int)
        cols = table.columns["col"].astype(int)
        grid = np.full((rows.max() + 1, cols.max() + 1), np.nan)
        grid[rows, cols] = table.columns["abs"]
        image = ax.imshow(grid, cmap="magma", origin="upper")
        fig.colorbar(image, ax=ax, label="|element|")
        _finish(ax, style, "column", "row", "effective generator magnitude")
        return fig
    value_name = next(c for c in table.header if c not in ("theta", "phi"))
    thetas, phis, grid = _pivot(
        table.columns["theta"], table.columns["phi"], table.columns[value_name])
    mesh = ax.pcolormesh(phis, thetas, grid, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=value_name)
    _finish(ax, style, "phi", "theta", f"{value_name} map")
    return fig


def build_loglog_scaling(tables: Sequence[Table], style: Style):
    series = tables[0]
    if series.schema == "readout uncertainty table":
        x_name, y_name = "n_atoms", "delta_bz_sq"
    else:
        x_name, y_name = series.header
    xs = series.columns[x_name]
    ys = series.columns[y_name]
    good = np.isfinite(xs) & np.isfinite(ys) & (xs > 0) & (ys > 0)
    if not good.any():
        raise ValueError(f"column '{y_name}' has no positive finite points to plot")
    xs, ys = xs[good], ys[good]

    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.loglog(xs, ys, "o", color="C0", markersize=5, label=y_name)
    if style.references:
        sql, hl = reference_exponents(xs, ys)
        span = np.array([xs.min(), xs.max()])
        ax.plot(span, ys[0] * (span / xs[0]) ** sql,
                label=f"SQL (slope {sql:+g})", **SQL_STYLE)
        ax.plot(span, ys[0] * (span / xs[0]) ** hl,
                label=f"HL (slope {hl:+g})", **HL_STYLE)
    if len(tables) == 2:
        fit = tables[1].columns
        slope = float(fit["slope"][0])
        span = np.geomspace(float(fit["x_lo"][0]), float(fit["x_hi"][0]), 64)
        ax.plot(span, np.exp(float(fit["intercept"][0])) * span ** slope,
                color="C3", linewidth=1.5, label=f"fit (slope {slope:.2f})")
    ax.legend()
    _finish(ax, style, x_name, y_name, f"{y_name} scaling")
    return fig


def build_sweep_lines(tables: Sequence[Table], style: Style):
    table = tables[0]
    if table.schema == "stroboscopic record":
        x_name = "time"
        line_names = [c for c in table.header if c not in ("period", "time")]
    else:
        x_name = table.header[0]
        line_names = list(table.header[1:])
    xs = table.columns[x_name]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for name in line_names:
        ys = table.columns[name]
        good = np.isfinite(ys)
        ax.plot(xs[good], ys[good], linewidth=1.3, label=name)
    if style.logy:
        ax.set_yscale("log")
    ax.legend()
    _finish(ax, style, x_name, "value", f"sweep over {x_name}")
    return fig


def build_bloch_husimi(tables: Sequence[Table], style: Style):
    table = tables[0]
    thetas, phis, grid = _pivot(
        table.columns["theta"], table.columns["phi"], table.columns["q"])
    if not style.projection:
        fig, ax = plt.subplots(figsize=FIGSIZE)
        axes = (ax,)
    else:
        fig, axes = plt.subplots(1, 2, figsize=WIDE_FIGSIZE)
    mesh = axes[0].pcolormesh(phis, thetas, grid, shading="nearest", cmap="inferno")
    fig.colorbar(mesh, ax=axes[0], label="Q")
    _finish(axes[0], style, "phi", "theta", "husimi distribution")
    if style.projection:
        # cosmetic top view of the upper hemisphere, looking down the z axis
        north = table.columns["theta"] <= math.pi / 2
        sin_t = np.sin(table.columns["theta"][north])
        axes[1].scatter(sin_t * np.cos(table.columns["phi"][north]),
                        sin_t * np.sin(table.columns["phi"][north]),
                        c=table.columns["q"][north], cmap="inferno",
                        s=6, linewidths=0)
        axes[1].add_patch(plt.Circle((0, 0), 1.0, fill=False, color="0.4"))
        axes[1].set_aspect("equal")
        axes[1].set_xlim(-1.05, 1.05)
        axes[1].set_ylim(-1.05, 1.05)
        axes[1].set_title("orthographic (north)")
    return fig


def build_entropy_cut(tables: Sequence[Table], style: Style):
    table = tables[0]
    ns = table.columns["n_atoms"]
    sizes, first = np.unique(ns, return_index=True)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for n in sizes[np.argsort(first)]:
        mask = ns == n
        ax.plot(table.columns["theta"][mask], table.columns["entropy"][mask],
                linewidth=1.3, label=f"N={n:g}")
    ax.legend()
    _finish(ax, style, "theta", "linear entropy", "entropy across the section")
    return fig


KINDS = {
    "poincare-scatter": build_poincare_scatter,
    "phase-heatmap": build_phase_heatmap,
    "loglog-scaling": build_loglog_scaling,
    "sweep-lines": build_sweep_lines,
    "bloch-husimi": build_bloch_husimi,
    "entropy-cut": build_entropy_cut,
}


def render(kind: str, tables: Sequence[Table], style: Style, out) -> Path:
    """Build the figure for ``kind`` and write it as a deterministic PNG."""
    out = Path(out)
    if out.suffix != ".png":
        raise ValueError(f"output must be a .png path, got {out.name!r}")
    if style.dpi <= 0:
        raise ValueError(f"dpi must be positive, got {style.dpi}")
    fig = KINDS[kind](tables, style)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        # dropping the Software entry removes the only varying PNG chunk
        fig.savefig(out, dpi=style.dpi, metadata={"Software": None})
    finally:
        plt.close(fig)
    return out
