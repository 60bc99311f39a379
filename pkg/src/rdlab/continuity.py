"""Sharp and fuzzy jump estimation with robust bias-corrected inference.

All jump estimates are oriented as (at-or-above limit) minus (below limit),
regardless of which side is treated; a treated-below design reads its
effects with flipped sign, exactly as when score and cutoff are negated.

The bias-corrected estimator is kept in exact linear-weights form. With
intercept weights l (order-p fit at h) and coefficient-(p+1) weights m
(order-q fit at b), each side contributes

    mu_hat   = l' y,            bias_hat = (m' y) * s,   s = l' (x-c)^(p+1)
    combined = (l - s m)' y     (the bias-corrected boundary value)

so the conventional variance is sum l_i^2 sigma2_i and the full variance of
the bias-corrected estimator is sum (l_i - s m_i)^2 sigma2_i, which prices
in the covariance between the point estimate and its bias correction. The
reported extra term W_hat is the difference between the two, floored at
zero so the robust interval can never be narrower than the conventional
one. With b = h this combined estimator coincides with the order-(p+1)
intercept, a property the test suite checks directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.stats import norm

from . import _accel
from .bandwidth import select_bandwidth_xy
from .dataset import CutoffSide, RDDataset, RDDesign, derive_assignment
from .errors import BandwidthTooSmall, EmptySide, InsufficientObservations, ZeroFirstStage
from .wls import (
    Kernel,
    LocalFit,
    NN_NEIGHBORS,
    VarianceMethod,
    fit_side,
    side_mask,
)

#: First-stage F statistics below this raise the weak-instrument flag.
WEAK_F_THRESHOLD = 10.0


class Estimand(Enum):
    SHARP_OUTCOME = "sharp_outcome"
    FIRST_STAGE = "first_stage"
    FUZZY_RATIO = "fuzzy_ratio"


@dataclass(frozen=True)
class EstimationSpec:
    """Estimation configuration; unset bandwidths come from the selector."""

    kernel: Kernel = Kernel.TRIANGULAR
    p: int = 1
    q: int | None = None  # default p + 1
    h: float | None = None  # default MSE-optimal
    b: float | None = None  # default equal to h (rho = 1)
    variance: VarianceMethod = VarianceMethod.NEAREST_NEIGHBOR
    level: float = 0.95
    optimize_b: bool = False


@dataclass(frozen=True)
class RDResult:
    estimand: Estimand
    point: float
    bias_correction: float
    mu_below: float | None
    mu_above: float | None
    variance_conventional: float
    variance_rbc_extra: float
    ci_conventional: tuple[float, float]
    ci_rbc: tuple[float, float]
    p_rbc: float
    h: float
    b: float
    n_minus_h: int
    n_plus_h: int
    kernel: Kernel
    p: int
    q: int
    variance_method: VarianceMethod
    level: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand.value,
            "point": self.point,
            "bias_correction": self.bias_correction,
            "mu_below": self.mu_below,
            "mu_above": self.mu_above,
            "variance_conventional": self.variance_conventional,
            "variance_rbc_extra": self.variance_rbc_extra,
            "ci_conventional": list(self.ci_conventional),
            "ci_rbc": list(self.ci_rbc),
            "p_rbc": self.p_rbc,
            "h": self.h,
            "b": self.b,
            "n_minus_h": self.n_minus_h,
            "n_plus_h": self.n_plus_h,
            "kernel": self.kernel.value,
            "p": self.p,
            "q": self.q,
            "variance_method": self.variance_method.value,
            "level": self.level,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class FuzzyResult:
    """The three fuzzy-design results sharing one bandwidth."""

    tau_y: RDResult
    tau_d: RDResult
    tau_frd: RDResult

    def __iter__(self):
        return iter((self.tau_y, self.tau_d, self.tau_frd))


def critical_value(level: float) -> float:
    # 1.96 is the fixed default; other levels map to the normal quantile.
    if level == 0.95:
        return 1.96
    return float(norm.ppf(0.5 + level / 2.0))


def _two_sided_p(numerator: float, variance: float, scale: float = 1.0) -> float:
    if variance <= 0.0:
        # Zero estimated noise: a numerator at the level of float dust on
        # `scale` counts as an exact zero.
        tol = 1e-9 * max(1.0, abs(scale))
        return 1.0 if abs(numerator) <= tol else 0.0
    return float(2.0 * norm.sf(abs(numerator) / np.sqrt(variance)))


@dataclass(frozen=True)
class _SideParts:
    mu: float
    bias: float
    rows_p: np.ndarray
    l_weights: np.ndarray
    rows_q: np.ndarray
    u_weights: np.ndarray
    fit_p: LocalFit
    fit_q: LocalFit
    curvature_coef: float


def _side_parts(x, v, cutoff, side, p, q, h, b, kernel) -> _SideParts:
    fit_p = fit_side(x, v, cutoff, side, p, h, kernel)
    fit_q = fit_side(x, v, cutoff, side, q, b, kernel)
    l = fit_p.intercept_weights
    m = fit_q.coef_weights[p + 1]
    s = float(l @ (x[fit_p.index] - cutoff) ** (p + 1))
    pos = np.searchsorted(fit_q.index, fit_p.index)
    if pos.max(initial=-1) >= fit_q.index.shape[0] or not np.array_equal(
        fit_q.index[pos], fit_p.index
    ):
        raise BandwidthTooSmall("bias bandwidth b must not be smaller than h")
    l_ext = np.zeros(fit_q.index.shape[0])
    l_ext[pos] = l
    curvature_coef = float(m @ v[fit_q.index])
    return _SideParts(
        mu=float(l @ v[fit_p.index]),
        bias=curvature_coef * s,
        rows_p=fit_p.index,
        l_weights=l,
        rows_q=fit_q.index,
        u_weights=l_ext - s * m,
        fit_p=fit_p,
        fit_q=fit_q,
        curvature_coef=curvature_coef,
    )


@dataclass(frozen=True)
class _SideIndex:
    """Score-sorted view of one side, shared by the variance estimators."""

    rows: np.ndarray
    order: np.ndarray
    x_sorted: np.ndarray


def _side_index(x, cutoff, side) -> _SideIndex:
    rows = np.flatnonzero(side_mask(x, cutoff, side))
    xs = x[rows]
    order = np.argsort(xs, kind="stable")
    return _SideIndex(rows=rows, order=order, x_sorted=np.ascontiguousarray(xs[order]))


def _nn_on_side(sidx: _SideIndex, v, w=None):
    """Nearest-neighbour sigma2 (or cross-products) aligned with sidx.rows."""
    n = sidx.rows.shape[0]
    if n < NN_NEIGHBORS + 1:
        raise InsufficientObservations("side", NN_NEIGHBORS + 1, n)
    v_sorted = np.ascontiguousarray(v[sidx.rows][sidx.order])
    if w is None:
        sorted_vals = _accel.nn_sigma2(sidx.x_sorted, v_sorted, NN_NEIGHBORS)
    else:
        w_sorted = np.ascontiguousarray(w[sidx.rows][sidx.order])
        sorted_vals = _accel.nn_cross(sidx.x_sorted, v_sorted, w_sorted, NN_NEIGHBORS)
    out = np.empty(n)
    out[sidx.order] = sorted_vals
    return out


def _side_sigma2(sidx, v, parts, method):
    """(sigma2 on rows_p for the conventional form, sigma2 on rows_q for RBC)."""
    if method is VarianceMethod.PLUG_IN_RESIDUAL:
        return parts.fit_p.residuals**2, parts.fit_q.residuals**2
    sig = _nn_on_side(sidx, v)
    return (
        sig[np.searchsorted(sidx.rows, parts.rows_p)],
        sig[np.searchsorted(sidx.rows, parts.rows_q)],
    )


def _side_cross(sidx, y, d, parts_y, parts_d, method):
    """Covariance analogues of :func:`_side_sigma2` for the fuzzy ratio."""
    if method is VarianceMethod.PLUG_IN_RESIDUAL:
        return (
            parts_y.fit_p.residuals * parts_d.fit_p.residuals,
            parts_y.fit_q.residuals * parts_d.fit_q.residuals,
        )
    cross = _nn_on_side(sidx, y, d)
    return (
        cross[np.searchsorted(sidx.rows, parts_y.rows_p)],
        cross[np.searchsorted(sidx.rows, parts_y.rows_q)],
    )


@dataclass(frozen=True)
class _Jump:
    point: float
    bias: float
    var_conv: float
    var_rbc: float
    below: _SideParts
    above: _SideParts


def _jump(x, v, cutoff, p, q, h, b, kernel, method, side_indexes=None) -> _Jump:
    below = _side_parts(x, v, cutoff, CutoffSide.BELOW, p, q, h, b, kernel)
    above = _side_parts(x, v, cutoff, CutoffSide.AT_OR_ABOVE, p, q, h, b, kernel)
    if side_indexes is None:
        side_indexes = (
            _side_index(x, cutoff, CutoffSide.BELOW),
            _side_index(x, cutoff, CutoffSide.AT_OR_ABOVE),
        )
    var_conv = 0.0
    var_rbc = 0.0
    for sidx, parts in zip(side_indexes, (below, above)):
        sig_p, sig_q = _side_sigma2(sidx, v, parts, method)
        var_conv += float(np.sum(parts.l_weights**2 * sig_p))
        var_rbc += float(np.sum(parts.u_weights**2 * sig_q))
    return _Jump(
        point=above.mu - below.mu,
        bias=above.bias - below.bias,
        var_conv=var_conv,
        var_rbc=var_rbc,
        below=below,
        above=above,
    )


def _resolve(spec: EstimationSpec, x, v, cutoff) -> tuple[EstimationSpec, tuple[str, ...]]:
    flags: tuple[str, ...] = ()
    h, b = spec.h, spec.b
    if h is None:
        sel = select_bandwidth_xy(
            x, v, cutoff, p=spec.p, kernel=spec.kernel, optimize_b=spec.optimize_b
        )
        h = sel.h
        if b is None:
            b = sel.b
        flags = sel.flags
    if b is None:
        b = h
    if h <= 0 or b <= 0:
        raise BandwidthTooSmall(f"h={h!r}, b={b!r}")
    if b < h * (1.0 - 1e-12):
        raise BandwidthTooSmall("bias bandwidth b must satisfy b >= h")
    q = spec.q if spec.q is not None else spec.p + 1
    if q < spec.p + 1:
        raise ValueError("bias-estimation order q must be at least p+1")
    return replace(spec, h=float(h), b=float(b), q=q), flags


def _window_counts(x, cutoff, h) -> tuple[int, int]:
    n_minus = int(np.sum((x >= cutoff - h) & (x < cutoff)))
    n_plus = int(np.sum((x >= cutoff) & (x <= cutoff + h)))
    return n_minus, n_plus


def estimate_sharp(
    data: RDDataset,
    design: RDDesign,
    spec: EstimationSpec | None = None,
    values: np.ndarray | None = None,
    estimand: Estimand = Estimand.SHARP_OUTCOME,
) -> RDResult:
    """Local polynomial jump estimate with conventional and robust CIs.

    ``values`` substitutes the outcome column (used for balance tests and
    the first stage); rows with non-finite values are excluded, and when no
    bandwidth is pinned the MSE selector runs on the substituted outcome.
    """
    spec = spec or EstimationSpec()
    v_all = data.outcome if values is None else np.asarray(values, dtype=float)
    keep = np.isfinite(v_all)
    x = data.score[keep]
    v = v_all[keep]
    spec, flags = _resolve(spec, x, v, design.cutoff)
    jump = _jump(
        x, v, design.cutoff, spec.p, spec.q, spec.h, spec.b, spec.kernel, spec.variance
    )
    return _result_from_jump(jump, x, design, spec, estimand, flags)


def _result_from_jump(jump, x, design, spec, estimand, flags) -> RDResult:
    z = critical_value(spec.level)
    w_extra = max(0.0, jump.var_rbc - jump.var_conv)
    half_conv = float(z * np.sqrt(jump.var_conv))
    total = jump.var_conv + w_extra
    half_rbc = float(z * np.sqrt(total))
    debiased = jump.point - jump.bias
    n_minus, n_plus = _window_counts(x, design.cutoff, spec.h)
    return RDResult(
        estimand=estimand,
        point=jump.point,
        bias_correction=jump.bias,
        mu_below=jump.below.mu,
        mu_above=jump.above.mu,
        variance_conventional=jump.var_conv,
        variance_rbc_extra=w_extra,
        ci_conventional=(jump.point - half_conv, jump.point + half_conv),
        ci_rbc=(debiased - half_rbc, debiased + half_rbc),
        p_rbc=_two_sided_p(
            debiased, total, scale=max(abs(jump.below.mu), abs(jump.above.mu))
        ),
        h=spec.h,
        b=spec.b,
        n_minus_h=n_minus,
        n_plus_h=n_plus,
        kernel=spec.kernel,
        p=spec.p,
        q=spec.q,
        variance_method=spec.variance,
        level=spec.level,
        warnings=flags,
    )


def first_stage_f_statistic(received: np.ndarray, assigned: np.ndarray) -> float:
    """F statistic of the assignment indicator in a regression of D on it.

    Equivalent to the squared pooled-variance t statistic for the
    difference in take-up rates between assigned and unassigned units.
    """
    assigned = np.asarray(assigned, dtype=bool)
    d_t = received[assigned]
    d_c = received[~assigned]
    if d_t.shape[0] == 0 or d_c.shape[0] == 0:
        raise EmptySide("both assignment groups are required for the F test")
    n_t, n_c = d_t.shape[0], d_c.shape[0]
    diff = float(d_t.mean() - d_c.mean())
    ssr = float(((d_t - d_t.mean()) ** 2).sum() + ((d_c - d_c.mean()) ** 2).sum())
    dof = n_t + n_c - 2
    if dof <= 0 or ssr == 0.0:
        return float("inf") if diff != 0.0 else 0.0
    s2 = ssr / dof
    return diff * diff / (s2 * (1.0 / n_t + 1.0 / n_c))


def estimate_fuzzy(
    data: RDDataset,
    design: RDDesign,
    spec: EstimationSpec | None = None,
    values: np.ndarray | None = None,
) -> FuzzyResult:
    """ITT, first-stage, and fuzzy-ratio estimates at one common bandwidth.

    The bandwidth is selected on the outcome equation and shared by
    numerator and denominator, so tau_frd * tau_d = tau_y holds exactly.
    Robust inference bias-corrects numerator and denominator separately and
    applies the delta method to the studentised ratio. ``values``
    substitutes the outcome column (fuzzy balance tests).
    """
    if data.received is None:
        raise ValueError("fuzzy estimation requires a received-treatment column")
    spec = spec or EstimationSpec()
    v_all = data.outcome if values is None else np.asarray(values, dtype=float)
    keep = np.isfinite(v_all)
    x = data.score[keep]
    y = v_all[keep]
    d = data.received[keep]
    assigned = derive_assignment(data, design)[keep]
    spec, flags = _resolve(spec, x, y, design.cutoff)
    c = design.cutoff
    side_indexes = (
        _side_index(x, c, CutoffSide.BELOW),
        _side_index(x, c, CutoffSide.AT_OR_ABOVE),
    )
    jump_y = _jump(
        x, y, c, spec.p, spec.q, spec.h, spec.b, spec.kernel, spec.variance, side_indexes
    )
    jump_d = _jump(
        x, d, c, spec.p, spec.q, spec.h, spec.b, spec.kernel, spec.variance, side_indexes
    )

    if abs(jump_d.point) < 1e-12:
        raise ZeroFirstStage(f"first-stage jump {jump_d.point!r} is numerically zero")

    in_window = np.abs(x - c) <= spec.h
    f_stat = first_stage_f_statistic(d[in_window], assigned[in_window].astype(bool))
    if f_stat < WEAK_F_THRESHOLD:
        flags = flags + ("weak_first_stage",)

    cross_conv = 0.0
    cross_rbc = 0.0
    for sidx, parts_y, parts_d in (
        (side_indexes[0], jump_y.below, jump_d.below),
        (side_indexes[1], jump_y.above, jump_d.above),
    ):
        cr_p, cr_q = _side_cross(sidx, y, d, parts_y, parts_d, spec.variance)
        cross_conv += float(np.sum(parts_y.l_weights**2 * cr_p))
        cross_rbc += float(np.sum(parts_y.u_weights**2 * cr_q))

    ratio = jump_y.point / jump_d.point
    var_conv = (
        jump_y.var_conv + ratio**2 * jump_d.var_conv - 2.0 * ratio * cross_conv
    ) / jump_d.point**2

    debiased_y = jump_y.point - jump_y.bias
    debiased_d = jump_d.point - jump_d.bias
    if abs(debiased_d) < 1e-12:
        raise ZeroFirstStage("bias-corrected first-stage jump is numerically zero")
    ratio_bc = debiased_y / debiased_d
    var_rbc = (
        jump_y.var_rbc + ratio_bc**2 * jump_d.var_rbc - 2.0 * ratio_bc * cross_rbc
    ) / debiased_d**2

    z = critical_value(spec.level)
    # The delta-method form is a weighted sum of squares (the per-point
    # covariance estimates satisfy cross^2 = sigma2_y * sigma2_d exactly),
    # so these clips only absorb rounding at the 1-ulp level.
    var_conv = max(0.0, var_conv)
    w_extra = max(0.0, var_rbc - var_conv)
    total = var_conv + w_extra
    half_conv = float(z * np.sqrt(var_conv))
    half_rbc = float(z * np.sqrt(total))
    n_minus, n_plus = _window_counts(x, c, spec.h)
    ratio_result = RDResult(
        estimand=Estimand.FUZZY_RATIO,
        point=ratio,
        bias_correction=ratio - ratio_bc,
        mu_below=None,
        mu_above=None,
        variance_conventional=var_conv,
        variance_rbc_extra=w_extra,
        ci_conventional=(ratio - half_conv, ratio + half_conv),
        ci_rbc=(ratio_bc - half_rbc, ratio_bc + half_rbc),
        p_rbc=_two_sided_p(ratio_bc, total),
        h=spec.h,
        b=spec.b,
        n_minus_h=n_minus,
        n_plus_h=n_plus,
        kernel=spec.kernel,
        p=spec.p,
        q=spec.q,
        variance_method=spec.variance,
        level=spec.level,
        warnings=flags,
    )
    return FuzzyResult(
        tau_y=_result_from_jump(jump_y, x, design, spec, Estimand.SHARP_OUTCOME, flags),
        tau_d=_result_from_jump(jump_d, x, design, spec, Estimand.FIRST_STAGE, flags),
        tau_frd=ratio_result,
    )
