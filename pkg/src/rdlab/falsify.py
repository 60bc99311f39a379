"""Falsification and diagnostic battery for sharp and fuzzy designs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.stats import binom, norm

from .bandwidth import select_bandwidth_xy
from .continuity import (
    Estimand,
    EstimationSpec,
    RDResult,
    estimate_fuzzy,
    estimate_sharp,
    first_stage_f_statistic,
)
from .dataset import (
    Compliance,
    CutoffSide,
    RDDataset,
    RDDesign,
    derive_assignment,
    score_profile,
)
from .errors import (
    CutoffOutsideSupport,
    DiscreteScore,
    EmptySide,
    EmptyWindow,
    InsufficientBins,
    InsufficientObservations,
    SideAmbiguous,
)
from .locrand import Window, fisher_test, superpop_estimate
from .wls import Kernel, fit_side, side_mask

#: Distinct-score threshold below which the density test is refused.
DENSITY_TEST_MIN_DISTINCT = 30


class DensityMethod(Enum):
    BINOMIAL = "binomial"
    LOCAL_LINEAR_DENSITY = "local_linear_density"


class Framework(Enum):
    CONTINUITY = "continuity"
    LOCAL_RANDOMIZATION = "local_randomization"
    FUZZY_RATIO = "fuzzy_ratio"


@dataclass(frozen=True)
class DensityTestResult:
    method: DensityMethod
    statistic: float
    p_value: float
    window_or_bandwidth: tuple[float, float] | float
    n_below: int
    n_above: int


@dataclass(frozen=True)
class DiagnosticRow:
    """One diagnostic estimate with the exact specification that produced it."""

    label: str
    framework: Framework
    estimand: Estimand
    estimate: float
    p_value: float
    ci: tuple[float, float] | None
    h: float | None
    window: tuple[float, float] | None
    kernel: Kernel | None
    p: int | None
    n_minus: int
    n_plus: int
    mean_below: float | None
    mean_above: float | None
    params: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class DiagnosticReport:
    balance_rows: tuple[DiagnosticRow, ...] = ()
    placebo_rows: tuple[DiagnosticRow, ...] = ()
    donut_rows: tuple[DiagnosticRow, ...] = ()
    sensitivity_rows: tuple[DiagnosticRow, ...] = ()
    first_stage_f: float | None = None
    flags: tuple[str, ...] = ()


def exact_binomial_p(k: int, n: int, q: float) -> float:
    """Exact two-sided binomial p: total probability of outcomes no more
    likely than the observed count (the minlike convention)."""
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    pmf = binom.pmf(np.arange(n + 1), n, q)
    # The relative slack keeps exact ties (e.g. the mirrored count at
    # q = 1/2) inside the sum despite floating-point evaluation noise.
    include = pmf <= pmf[k] * (1.0 + 1e-12)
    if include.all():
        return 1.0
    return float(min(1.0, pmf[include].sum()))


def binomial_density_test(
    data: RDDataset,
    design: RDDesign,
    window: tuple[float, float],
    q: float = 0.5,
) -> DensityTestResult:
    """Exact binomial test of equal counts on the two sides of the cutoff."""
    lo, hi = float(window[0]), float(window[1])
    x = data.score
    in_window = (x >= lo) & (x <= hi)
    n_below = int(np.sum(in_window & (x < design.cutoff)))
    n_above = int(np.sum(in_window & (x >= design.cutoff)))
    total = n_below + n_above
    if total == 0:
        raise EmptyWindow(f"no observations in [{lo}, {hi}]")
    p = exact_binomial_p(n_above, total, q)
    return DensityTestResult(
        method=DensityMethod.BINOMIAL,
        statistic=n_above / total,
        p_value=p,
        window_or_bandwidth=(lo, hi),
        n_below=n_below,
        n_above=n_above,
    )


def density_discontinuity_test(
    data: RDDataset,
    design: RDDesign,
    bin_width: float | None = None,
    h_density: float | None = None,
    kernel: Kernel = Kernel.TRIANGULAR,
) -> DensityTestResult:
    """Binned local-linear test for a jump in the score density at the cutoff.

    The score is histogrammed at ``bin_width`` with bins aligned at the
    cutoff; bin heights are fit linearly on each side at ``h_density``
    (selected by the bandwidth module on the bin series when not given),
    and the side limits are compared with a normal statistic whose
    variance comes from the binomial sampling noise of the bin counts.
    """
    profile = score_profile(data, design)
    if profile.K < DENSITY_TEST_MIN_DISTINCT:
        raise DiscreteScore(
            f"score has K={profile.K} distinct values; "
            f"the density test needs at least {DENSITY_TEST_MIN_DISTINCT}"
        )
    x = data.score
    n = x.shape[0]
    c = design.cutoff
    if bin_width is None:
        q75, q25 = np.quantile(x, [0.75, 0.25])
        bin_width = 2.0 * float(q75 - q25) * n ** (-0.5)
        if bin_width <= 0.0:
            bin_width = float(x.max() - x.min()) / 50.0
    idx = np.floor((x - c) / bin_width).astype(np.int64)
    offset = idx.min()
    counts = np.bincount(idx - offset, minlength=int(idx.max() - offset + 1))
    mids = (np.arange(offset, idx.max() + 1) + 0.5) * bin_width + c
    heights = counts / (n * bin_width)
    if h_density is None:
        sel = select_bandwidth_xy(mids, heights, c, p=1, kernel=kernel)
        h_density = sel.h
    variances = np.maximum(counts, 1) * (1.0 - counts / n) / (n * bin_width) ** 2
    intercepts = {}
    var_sides = {}
    for cside in (CutoffSide.BELOW, CutoffSide.AT_OR_ABOVE):
        try:
            fit = fit_side(mids, heights, c, cside, 1, h_density, kernel)
        except InsufficientObservations as exc:
            raise InsufficientBins(str(exc)) from exc
        intercepts[cside] = fit.coefficients[0]
        var_sides[cside] = float(
            np.sum(fit.intercept_weights**2 * variances[fit.index])
        )
    se = np.sqrt(var_sides[CutoffSide.BELOW] + var_sides[CutoffSide.AT_OR_ABOVE])
    jump = intercepts[CutoffSide.AT_OR_ABOVE] - intercepts[CutoffSide.BELOW]
    stat = float(jump / se) if se > 0 else 0.0
    return DensityTestResult(
        method=DensityMethod.LOCAL_LINEAR_DENSITY,
        statistic=stat,
        p_value=float(2.0 * norm.sf(abs(stat))),
        window_or_bandwidth=float(h_density),
        n_below=int(np.sum((x >= c - h_density) & (x < c))),
        n_above=int(np.sum((x >= c) & (x <= c + h_density))),
    )


def _row_from_result(label, framework, res: RDResult, params=None) -> DiagnosticRow:
    return DiagnosticRow(
        label=label,
        framework=framework,
        estimand=res.estimand,
        estimate=res.point,
        p_value=res.p_rbc,
        ci=res.ci_rbc,
        h=res.h,
        window=None,
        kernel=res.kernel,
        p=res.p,
        n_minus=res.n_minus_h,
        n_plus=res.n_plus_h,
        mean_below=res.mu_below,
        mean_above=res.mu_above,
        params=params or {},
        flags=res.warnings,
    )


def covariate_balance(
    data: RDDataset,
    design: RDDesign,
    covariates=None,
    framework: Framework = Framework.CONTINUITY,
    window: Window | None = None,
    spec: EstimationSpec | None = None,
    seed: int = 0,
    reps: int = 1000,
) -> list[DiagnosticRow]:
    """Balance tests treating each predetermined covariate as the outcome.

    Continuity rows re-estimate the jump with a bandwidth selected per
    covariate; local-randomization rows run the Fisherian test inside the
    fixed chosen window; fuzzy rows apply the ratio estimator. Rows missing
    a covariate are excluded for that covariate only.
    """
    names = list(covariates) if covariates is not None else list(data.covariates)
    if not names:
        raise ValueError("no covariates to test")
    rows: list[DiagnosticRow] = []
    base_spec = spec or EstimationSpec()
    for name in names:
        cov = data.column(name)
        if framework is Framework.CONTINUITY:
            res = estimate_sharp(
                data, design, replace(base_spec, h=None, b=None), values=cov
            )
            rows.append(_row_from_result(name, framework, res))
        elif framework is Framework.FUZZY_RATIO:
            fuzzy = estimate_fuzzy(
                data, design, replace(base_spec, h=None, b=None), values=cov
            )
            rows.append(_row_from_result(name, framework, fuzzy.tau_frd))
        else:
            if window is None:
                raise ValueError("local-randomization balance requires a window")
            res = fisher_test(data, design, window, target=name, seed=seed, reps=reps)
            finite = np.isfinite(cov)
            in_w = finite & (data.score >= window.lower) & (data.score <= window.upper)
            above = in_w & (data.score >= design.cutoff)
            below = in_w & (data.score < design.cutoff)
            rows.append(
                DiagnosticRow(
                    label=name,
                    framework=framework,
                    estimand=Estimand.SHARP_OUTCOME,
                    estimate=res.statistic,
                    p_value=res.p_value,
                    ci=None,
                    h=None,
                    window=(window.lower, window.upper),
                    kernel=None,
                    p=None,
                    n_minus=int(below.sum()),
                    n_plus=int(above.sum()),
                    mean_below=float(cov[below].mean()) if below.any() else None,
                    mean_above=float(cov[above].mean()) if above.any() else None,
                    params={"method": res.method.value, "seed": res.seed},
                )
            )
    return rows


def placebo_cutoffs(
    data: RDDataset,
    design: RDDesign,
    cutoffs,
    spec: EstimationSpec | None = None,
) -> list[DiagnosticRow]:
    """Jump estimates at artificial cutoffs on a single side of the true one.

    Each placebo cutoff uses only the observations on its own side of the
    true cutoff (where treatment status is constant) and selects a fresh
    MSE-optimal bandwidth. Both the outcome and, when present, the
    received-treatment column are tested.
    """
    base_spec = spec or EstimationSpec()
    rows: list[DiagnosticRow] = []
    for cp in cutoffs:
        cp = float(cp)
        if cp == design.cutoff:
            raise SideAmbiguous("placebo cutoff equals the true cutoff")
        side = CutoffSide.BELOW if cp < design.cutoff else CutoffSide.AT_OR_ABOVE
        sub = data.subset(side_mask(data.score, design.cutoff, side))
        if sub.score.size == 0 or not (sub.score.min() < cp < sub.score.max()):
            raise CutoffOutsideSupport(
                f"placebo cutoff {cp} is not strictly inside the "
                f"{side.value} side's score range"
            )
        pdesign = RDDesign(
            cutoff=cp, treated_side=design.treated_side, compliance=Compliance.SHARP
        )
        pspec = replace(base_spec, h=None, b=None)
        targets = [("outcome", None)]
        if sub.received is not None:
            targets.append(("received", sub.received))
        for target_name, values in targets:
            res = estimate_sharp(sub, pdesign, pspec, values=values)
            rows.append(
                _row_from_result(
                    f"placebo c={cp} ({target_name})",
                    Framework.CONTINUITY,
                    res,
                    params={"placebo_cutoff": cp, "target": target_name},
                )
            )
    return rows


def donut_hole(
    data: RDDataset,
    design: RDDesign,
    spec: EstimationSpec | None = None,
    radii=(0.0,),
) -> list[DiagnosticRow]:
    """Re-estimation after removing observations within each donut radius.

    The bandwidth is resolved once on the full sample and held fixed; a
    radius r > 0 drops rows with |score - cutoff| <= r, and r = 0 drops
    nothing (reproducing the main estimate exactly).
    """
    spec = _freeze_bandwidth(data, design, spec)
    fuzzy = design.compliance is Compliance.FUZZY and data.received is not None
    rows: list[DiagnosticRow] = []
    for r in radii:
        r = float(r)
        if r < 0:
            raise ValueError("donut radius must be nonnegative")
        if r > 0:
            keep = np.abs(data.score - design.cutoff) > r
            sub = data.subset(keep)
        else:
            sub = data
        params = {"radius": r}
        if fuzzy:
            result = estimate_fuzzy(sub, design, spec)
            for res in result:
                rows.append(
                    _row_from_result(
                        f"donut r={r} ({res.estimand.value})",
                        Framework.CONTINUITY,
                        res,
                        params=params,
                    )
                )
        else:
            res = estimate_sharp(sub, design, spec)
            rows.append(
                _row_from_result(
                    f"donut r={r}", Framework.CONTINUITY, res, params=params
                )
            )
    return rows


def _freeze_bandwidth(data, design, spec) -> EstimationSpec:
    spec = spec or EstimationSpec()
    if spec.h is not None:
        return replace(spec, b=spec.b if spec.b is not None else spec.h)
    sel = select_bandwidth_xy(
        data.score,
        data.outcome,
        design.cutoff,
        p=spec.p,
        kernel=spec.kernel,
        optimize_b=spec.optimize_b,
    )
    return replace(spec, h=sel.h, b=spec.b if spec.b is not None else sel.b)


def sensitivity_sweep(
    data: RDDataset,
    design: RDDesign,
    spec: EstimationSpec | None = None,
    bandwidths=None,
    windows=None,
    level: float = 0.95,
) -> list[DiagnosticRow]:
    """Re-estimation across alternative bandwidths or windows.

    Bandwidth rows re-run the continuity estimator at each supplied h,
    scaling b to keep rho fixed; window rows run the large-sample
    local-randomization estimator. Rows come back ordered by neighborhood
    size.
    """
    if bandwidths is None and windows is None:
        raise ValueError("supply bandwidths and/or windows to sweep")
    spec = _freeze_bandwidth(data, design, spec)
    fuzzy = design.compliance is Compliance.FUZZY and data.received is not None
    rows: list[DiagnosticRow] = []
    for h in sorted(float(h) for h in (bandwidths or ())):
        hspec = replace(spec, h=h, b=h * (spec.b / spec.h))
        results = list(estimate_fuzzy(data, design, hspec)) if fuzzy else [
            estimate_sharp(data, design, hspec)
        ]
        for res in results:
            rows.append(
                _row_from_result(
                    f"h={h:g} ({res.estimand.value})",
                    Framework.CONTINUITY,
                    res,
                    params={"h": h},
                )
            )
    for lo, hi in sorted(windows or (), key=lambda w: w[1] - w[0]):
        window = Window(
            float(lo),
            float(hi),
            int(np.sum((data.score >= lo) & (data.score < design.cutoff))),
            int(np.sum((data.score >= design.cutoff) & (data.score <= hi))),
        )
        for est in superpop_estimate(data, design, window, fuzzy=fuzzy, level=level):
            rows.append(
                DiagnosticRow(
                    label=f"window [{lo:g}, {hi:g}] ({est.estimand.value})",
                    framework=Framework.LOCAL_RANDOMIZATION,
                    estimand=est.estimand,
                    estimate=est.point,
                    p_value=est.p_value,
                    ci=est.ci,
                    h=None,
                    window=est.window,
                    kernel=None,
                    p=None,
                    n_minus=est.n_minus,
                    n_plus=est.n_plus,
                    mean_below=est.mean_below,
                    mean_above=est.mean_above,
                )
            )
    return rows


def first_stage_f(data: RDDataset, design: RDDesign, h: float) -> float:
    """First-stage F statistic within bandwidth h of the cutoff.

    Regresses received treatment on the assignment indicator using only
    observations with |score - cutoff| <= h. Values below
    :data:`~rdlab.continuity.WEAK_F_THRESHOLD` signal a weak instrument.
    """
    if data.received is None:
        raise ValueError("first-stage F requires a received-treatment column")
    in_window = np.abs(data.score - design.cutoff) <= h
    if not in_window.any():
        raise EmptySide("no observations within the bandwidth")
    assigned = derive_assignment(data, design)[in_window].astype(bool)
    return first_stage_f_statistic(data.received[in_window], assigned)
