import xml.etree.ElementTree as ET

import numpy as np
import pytest

from rdlab.dataset import RDDataset, RDDesign
from rdlab.plotting import (
    Binning,
    build_rdplot,
    render_histogram_svg,
    render_rdplot_svg,
    score_histogram,
)


def test_singleton_bins_reproduce_outcomes():
    x = np.array([-0.8, -0.5, -0.2, 0.1, 0.4, 0.7])
    y = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    plot = build_rdplot(
        RDDataset(score=x, outcome=y),
        RDDesign(cutoff=0.0),
        binning=Binning.MASS_POINTS,
        p_global=1,
    )
    assert [b.mean for b in plot.bins] == list(y)
    assert all(b.count == 1 for b in plot.bins)


def test_mass_point_binning_weekly():
    weeks = np.repeat(np.arange(-25, 25), 7).astype(float)
    rng = np.random.default_rng(4)
    y = rng.normal(size=weeks.size)
    plot = build_rdplot(RDDataset(score=weeks, outcome=y), RDDesign(cutoff=0.0))
    assert plot.binning is Binning.MASS_POINTS
    assert len(plot.bins) == 50
    assert all(b.count == 7 for b in plot.bins)
    first = plot.bins[0]
    np.testing.assert_allclose(first.mean, y[weeks == -25].mean())


def test_mass_conservation():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, 700)
    y = rng.normal(size=700)
    data = RDDataset(score=x, outcome=y)
    for binning in (Binning.EVENLY_SPACED, Binning.QUANTILE_SPACED):
        plot = build_rdplot(data, RDDesign(cutoff=0.0), binning=binning)
        total = sum(b.count * b.mean for b in plot.bins)
        assert total == pytest.approx(y.sum(), abs=1e-9)
        assert sum(b.count for b in plot.bins) == 700


def test_bins_never_straddle_cutoff():
    rng = np.random.default_rng(6)
    x = rng.uniform(-2, 2, 500)
    plot = build_rdplot(
        RDDataset(score=x, outcome=rng.normal(size=500)), RDDesign(cutoff=0.3)
    )
    for b in plot.bins:
        assert b.upper <= 0.3 or b.lower >= 0.3


def test_overlay_fidelity_on_polynomial():
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, 3000)
    coef = np.array([0.5, -1.0, 0.75, 0.3, -0.2])
    y = np.polynomial.polynomial.polyval(x, coef)
    plot = build_rdplot(RDDataset(score=x, outcome=y), RDDesign(cutoff=0.0), p_global=4)
    for b in plot.bins:
        side = plot.fit_below if b.midpoint < 0 else plot.fit_above
        fitted = np.polynomial.polynomial.polyval(b.midpoint, side)
        truth = np.polynomial.polynomial.polyval(b.midpoint, coef)
        assert fitted == pytest.approx(truth, abs=1e-6)


def test_overlay_omitted_with_thin_support():
    x = np.array([-0.2, -0.1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    plot = build_rdplot(
        RDDataset(score=x, outcome=np.ones(8)), RDDesign(cutoff=0.0), p_global=4
    )
    assert plot.fit_below is None
    assert "overlay_omitted_below" in plot.flags


def test_histogram_counts_and_alignment():
    x = np.full(25, 3.7)
    hist = score_histogram(RDDataset(score=x, outcome=x), RDDesign(cutoff=4.0), bin_width=0.5)
    assert len(hist.bins) == 1
    assert hist.bins[0][2] == 25
    rng = np.random.default_rng(8)
    xs = rng.uniform(0, 10, 400)
    hist2 = score_histogram(
        RDDataset(score=xs, outcome=xs), RDDesign(cutoff=5.0), bin_width=1.0
    )
    assert sum(n for _, _, n in hist2.bins) == 400
    for lo, hi, _ in hist2.bins:
        assert hi <= 5.0 or lo >= 5.0


def test_histogram_zoom_matches_restriction():
    rng = np.random.default_rng(9)
    xs = rng.uniform(300, 400, 2000)
    data = RDDataset(score=xs, outcome=xs)
    design = RDDesign(cutoff=350.0)
    full = score_histogram(data, design, bin_width=1.0)
    zoom = score_histogram(data, design, bin_width=1.0, value_range=(345.0, 355.0))
    full_map = {(lo, hi): n for lo, hi, n in full.bins}
    for lo, hi, n in zoom.bins:
        assert full_map[(lo, hi)] == n


def test_svg_renders_valid_xml(smooth_data):
    plot = build_rdplot(smooth_data, RDDesign(cutoff=0.0))
    svg = render_rdplot_svg(plot)
    root = ET.fromstring(svg)
    tags = {child.tag.split("}")[-1] for child in root.iter()}
    assert "circle" in tags and "polyline" in tags and "line" in tags
    hist = score_histogram(smooth_data, RDDesign(cutoff=0.0))
    hist_svg = render_histogram_svg(hist)
    assert ET.fromstring(hist_svg).tag.endswith("svg")
