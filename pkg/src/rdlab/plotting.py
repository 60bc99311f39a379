"""RD plot data (binned means + global polynomial overlays) and histograms.

Rendering never goes through an external plotting library: plot data is
emitted as JSON/CSV, and a minimal SVG writer draws dots, overlays, and
the cutoff line.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import RDDataset, RDDesign, score_profile
from .errors import RDError

#: Auto-select mass-point binning when ties exist and K is at most this.
MASS_POINT_BINNING_MAX_K = 60


class Binning(Enum):
    EVENLY_SPACED = "evenly_spaced"
    QUANTILE_SPACED = "quantile_spaced"
    MASS_POINTS = "mass_points"


@dataclass(frozen=True)
class BinStat:
    lower: float
    upper: float
    midpoint: float
    mean: float
    count: int
    ci_lower: float | None
    ci_upper: float | None


@dataclass(frozen=True)
class RDPlotData:
    bins: tuple[BinStat, ...]
    fit_below: tuple[float, ...] | None
    fit_above: tuple[float, ...] | None
    cutoff: float
    binning: Binning
    p_global: int
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class HistogramSeries:
    bins: tuple[tuple[float, float, int], ...]  # (lower, upper, count)
    bin_width: float
    cutoff: float


def _edges_for_side(x_side: np.ndarray, n_bins: int, binning: Binning) -> np.ndarray:
    lo, hi = float(x_side.min()), float(x_side.max())
    if binning is Binning.QUANTILE_SPACED:
        edges = np.unique(np.quantile(x_side, np.linspace(0, 1, n_bins + 1)))
        if edges.size < 2:
            edges = np.array([lo, hi])
        return edges
    if hi == lo:
        return np.array([lo, lo])
    return np.linspace(lo, hi, n_bins + 1)


def _bin_side(x, y, edges) -> list[BinStat]:
    out = []
    for j in range(max(1, edges.size - 1)):
        lo, hi = edges[j], edges[min(j + 1, edges.size - 1)]
        if j == edges.size - 2 or edges.size <= 2:
            mask = (x >= lo) & (x <= hi)
        else:
            mask = (x >= lo) & (x < hi)
        count = int(mask.sum())
        if count == 0:
            continue
        vals = y[mask]
        mean = float(vals.mean())
        if count > 1:
            half = 1.96 * float(vals.std(ddof=1)) / np.sqrt(count)
            ci = (mean - half, mean + half)
        else:
            ci = (None, None)
        out.append(
            BinStat(
                lower=float(lo),
                upper=float(hi),
                midpoint=float((lo + hi) / 2.0),
                mean=mean,
                count=count,
                ci_lower=ci[0],
                ci_upper=ci[1],
            )
        )
    return out


def _global_fit(x_centered, y, order):
    scale = float(np.max(np.abs(x_centered)))
    if scale == 0:
        scale = 1.0
    design = (x_centered / scale)[:, None] ** np.arange(order + 1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return tuple(float(c) for c in coef / scale ** np.arange(order + 1))


def build_rdplot(
    data: RDDataset,
    design: RDDesign,
    p_global: int = 4,
    binning: Binning | None = None,
    bins_per_side: int = 20,
) -> RDPlotData:
    """Binned outcome means per side plus global polynomial overlays.

    Bins never straddle the cutoff. With repeated score values and at most
    :data:`MASS_POINT_BINNING_MAX_K` distinct values, each mass point
    becomes its own bin (auto-selected when ``binning`` is None). Overlay
    coefficients are in powers of (score - cutoff); a side with fewer than
    p_global+1 distinct values gets no overlay and a flag instead.
    """
    profile = score_profile(data, design)
    if binning is None:
        if profile.max_multiplicity > 1 and profile.K <= MASS_POINT_BINNING_MAX_K:
            binning = Binning.MASS_POINTS
        else:
            binning = Binning.EVENLY_SPACED
    x = data.score
    y = data.outcome
    c = design.cutoff
    below = x < c
    if not below.any() or below.all():
        raise RDError("need observations on both sides of the cutoff to plot")
    bins: list[BinStat] = []
    flags: list[str] = []
    fits: dict[str, tuple[float, ...] | None] = {}
    for name, mask in (("below", below), ("above", ~below)):
        xs, ys = x[mask], y[mask]
        if binning is Binning.MASS_POINTS:
            for value in np.unique(xs):
                sel = xs == value
                bins.extend(_bin_side(xs[sel], ys[sel], np.array([value, value])))
        else:
            bins.extend(_bin_side(xs, ys, _edges_for_side(xs, bins_per_side, binning)))
        if np.unique(xs).size >= p_global + 1:
            fits[name] = _global_fit(xs - c, ys, p_global)
        else:
            fits[name] = None
            flags.append(f"overlay_omitted_{name}")
    bins.sort(key=lambda b: b.midpoint)
    return RDPlotData(
        bins=tuple(bins),
        fit_below=fits["below"],
        fit_above=fits["above"],
        cutoff=c,
        binning=binning,
        p_global=p_global,
        flags=tuple(flags),
    )


def score_histogram(
    data: RDDataset,
    design: RDDesign,
    bin_width: float | None = None,
    value_range: tuple[float, float] | None = None,
) -> HistogramSeries:
    """Score histogram with bin edges anchored at the cutoff.

    Bins are the half-open intervals [c + k*w, c + (k+1)*w), so no bin
    straddles the cutoff and restricting ``value_range`` reproduces the
    corresponding slice of the full-range histogram.
    """
    x = data.score
    if value_range is not None:
        lo, hi = value_range
        x = x[(x >= lo) & (x <= hi)]
    if x.size == 0:
        return HistogramSeries(bins=(), bin_width=float(bin_width or 1.0), cutoff=design.cutoff)
    if bin_width is None:
        span = float(x.max() - x.min())
        bin_width = span / 20.0 if span > 0 else 1.0
    c = design.cutoff
    idx = np.floor((x - c) / bin_width).astype(np.int64)
    offset = int(idx.min())
    counts = np.bincount(idx - offset, minlength=int(idx.max() - offset + 1))
    bins = tuple(
        (c + (offset + j) * bin_width, c + (offset + j + 1) * bin_width, int(n))
        for j, n in enumerate(counts)
    )
    return HistogramSeries(bins=bins, bin_width=float(bin_width), cutoff=c)


# ---------------------------------------------------------------------------
# SVG rendering


def _scaler(lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0

    def to_px(v):
        return out_lo + (v - lo) / span * (out_hi - out_lo)

    return to_px


def _axes(parts, x_px, y_px, xlo, xhi, ylo, yhi, width, height, margin):
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="#444"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = xlo + frac * (xhi - xlo)
        yv = ylo + frac * (yhi - ylo)
        parts.append(
            f'<text x="{x_px(xv):.1f}" y="{height - margin + 14:.1f}" '
            f'font-size="10" text-anchor="middle">{xv:.4g}</text>'
        )
        parts.append(
            f'<text x="{margin - 4:.1f}" y="{y_px(yv) + 3:.1f}" '
            f'font-size="10" text-anchor="end">{yv:.4g}</text>'
        )


def render_rdplot_svg(plot: RDPlotData, width: int = 640, height: int = 420) -> str:
    """Serialise plot data into a standalone SVG document."""
    margin = 46
    xs = [b.midpoint for b in plot.bins]
    ys = [b.mean for b in plot.bins]
    if not xs:
        raise RDError("nothing to plot")
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    pad = 0.05 * ((yhi - ylo) or 1.0)
    ylo, yhi = ylo - pad, yhi + pad
    x_px = _scaler(xlo, xhi, margin, width - margin)
    y_px = _scaler(ylo, yhi, height - margin, margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    _axes(parts, x_px, y_px, xlo, xhi, ylo, yhi, width, height, margin)
    if xlo <= plot.cutoff <= xhi:
        cx = x_px(plot.cutoff)
        parts.append(
            f'<line x1="{cx:.1f}" y1="{margin}" x2="{cx:.1f}" '
            f'y2="{height - margin}" stroke="#999" stroke-dasharray="4,3"/>'
        )
    for coef, lo, hi, color in (
        (plot.fit_below, xlo, plot.cutoff, "#1f77b4"),
        (plot.fit_above, plot.cutoff, xhi, "#d62728"),
    ):
        if coef is None or hi <= lo:
            continue
        grid = np.linspace(lo, hi, 120)
        vals = np.polynomial.polynomial.polyval(grid - plot.cutoff, coef)
        pts = " ".join(f"{x_px(gx):.1f},{y_px(gv):.1f}" for gx, gv in zip(grid, vals))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    for b in plot.bins:
        color = "#1f77b4" if b.midpoint < plot.cutoff else "#d62728"
        parts.append(
            f'<circle cx="{x_px(b.midpoint):.1f}" cy="{y_px(b.mean):.1f}" '
            f'r="2.6" fill="{color}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def render_histogram_svg(
    hist: HistogramSeries, width: int = 640, height: int = 420
) -> str:
    """Serialise a score histogram into a standalone SVG document."""
    margin = 46
    if not hist.bins:
        raise RDError("nothing to plot")
    xlo = hist.bins[0][0]
    xhi = hist.bins[-1][1]
    ymax = max(n for _, _, n in hist.bins) or 1
    x_px = _scaler(xlo, xhi, margin, width - margin)
    y_px = _scaler(0, ymax, height - margin, margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    _axes(parts, x_px, y_px, xlo, xhi, 0, ymax, width, height, margin)
    for lo, hi, count in hist.bins:
        if count == 0:
            continue
        x0, x1 = x_px(lo), x_px(hi)
        y0 = y_px(count)
        color = "#1f77b4" if hi <= hist.cutoff else "#d62728"
        parts.append(
            f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{max(0.5, x1 - x0):.1f}" '
            f'height="{y_px(0) - y0:.1f}" fill="{color}" fill-opacity="0.7"/>'
        )
    cx = x_px(hist.cutoff)
    if xlo <= hist.cutoff <= xhi:
        parts.append(
            f'<line x1="{cx:.1f}" y1="{margin}" x2="{cx:.1f}" '
            f'y2="{height - margin}" stroke="#333" stroke-dasharray="4,3"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
