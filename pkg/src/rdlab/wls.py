"""Kernel weights and the one-sided local polynomial WLS engine.

Fits are computed in the rescaled regressor basis ((x - c)/h)^j via a QR
decomposition of the weighted design; normal equations are never formed.
Coefficients are reported in the raw (x - c)^j basis, intercept first.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _accel
from .dataset import CutoffSide, RDDataset, RDDesign
from .errors import InsufficientObservations, SingularDesign


class Kernel(Enum):
    TRIANGULAR = "triangular"
    UNIFORM = "uniform"
    EPANECHNIKOV = "epanechnikov"


class VarianceMethod(Enum):
    NEAREST_NEIGHBOR = "nearest_neighbor"
    PLUG_IN_RESIDUAL = "plug_in_residual"


#: Same-side neighbours used by the nearest-neighbour variance estimator.
NN_NEIGHBORS = 3


def kernel_weight(kernel: Kernel, u):
    """Weight at signed distance ``u`` (in bandwidth units) from the cutoff.

    Triangular: max(0, 1-|u|); uniform: 1(|u| <= 1);
    Epanechnikov: max(0, 0.75(1-u^2)).
    """
    u = np.abs(np.asarray(u, dtype=float))
    if kernel is Kernel.TRIANGULAR:
        w = np.maximum(0.0, 1.0 - u)
    elif kernel is Kernel.UNIFORM:
        w = (u <= 1.0).astype(float)
    elif kernel is Kernel.EPANECHNIKOV:
        w = np.maximum(0.0, 0.75 * (1.0 - u * u))
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    if w.ndim == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class LocalFit:
    """One-sided weighted polynomial fit anchored at the cutoff.

    ``coefficients[j]`` multiplies (x - c)^j; ``coefficients[0]`` is the
    boundary value estimate. ``coef_weights[j]`` holds the linear weights
    that produce coefficient j from the in-window outcomes, so
    ``coefficients = coef_weights @ outcome[index]`` exactly.
    """

    side: CutoffSide
    coefficients: np.ndarray
    residuals: np.ndarray
    effective_n: int
    bandwidth: float
    index: np.ndarray
    kernel_weights: np.ndarray
    coef_weights: np.ndarray

    @property
    def intercept_weights(self) -> np.ndarray:
        return self.coef_weights[0]


@dataclass(frozen=True)
class VarianceEstimate:
    intercept_variance: float
    method: VarianceMethod


def side_mask(score: np.ndarray, cutoff: float, side: CutoffSide) -> np.ndarray:
    if side is CutoffSide.BELOW:
        return score < cutoff
    return score >= cutoff


def fit_side(
    score: np.ndarray,
    values: np.ndarray,
    cutoff: float,
    side: CutoffSide,
    p: int,
    h: float,
    kernel: Kernel,
) -> LocalFit:
    """Array-level workhorse behind :func:`local_fit`."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    on_side = side_mask(score, cutoff, side)
    u_all = (score - cutoff) / h
    w_all = kernel_weight(kernel, u_all)
    mask = on_side & (w_all > 0.0)
    index = np.flatnonzero(mask)
    needed = p + 2
    if index.shape[0] < needed:
        raise InsufficientObservations(side.value, needed, int(index.shape[0]))
    # A prefix with >= needed distinct values certifies the whole window;
    # only sparse-support windows pay for the full distinct count.
    window_scores = score[index]
    if np.unique(window_scores[:256]).shape[0] < needed:
        if np.unique(window_scores).shape[0] < needed:
            raise SingularDesign(
                f"side {side.value!r}: fewer than {needed} distinct score values "
                f"carry positive weight at h={h!r}"
            )
    u = u_all[index]
    w = w_all[index]
    y = values[index]
    design = np.empty((index.shape[0], p + 1))
    design[:, 0] = 1.0
    for j in range(1, p + 1):
        design[:, j] = design[:, j - 1] * u
    sw = np.sqrt(w)
    q_mat, r_mat = np.linalg.qr(design * sw[:, None])
    diag = np.abs(np.diag(r_mat))
    if diag.min() <= diag.max() * np.finfo(float).eps * max(index.shape[0], p + 1):
        raise SingularDesign(
            f"side {side.value!r}: weighted design is numerically singular"
        )
    # coef_weights rows solve R gamma = Q' diag(sqrt(w)) y, rescaled to the
    # raw basis; every downstream quantity is linear in these weights.
    r_inv = np.linalg.inv(r_mat)
    scaled_weights = (r_inv @ q_mat.T) * sw[None, :]
    rescale = h ** np.arange(p + 1)
    coef_weights = scaled_weights / rescale[:, None]
    coefficients = coef_weights @ y
    fitted = design @ (coefficients * rescale)
    return LocalFit(
        side=side,
        coefficients=coefficients,
        residuals=y - fitted,
        effective_n=int(index.shape[0]),
        bandwidth=float(h),
        index=index,
        kernel_weights=w,
        coef_weights=coef_weights,
    )


def local_fit(
    data: RDDataset,
    design: RDDesign,
    side: CutoffSide,
    p: int,
    h: float,
    kernel: Kernel,
    values: np.ndarray | None = None,
) -> LocalFit:
    """Weighted least squares polynomial fit on one side of the cutoff.

    Minimises sum_i w_i (y_i - sum_j beta_j (x_i - c)^j)^2 over observations
    on ``side`` with positive kernel weight w_i = K((x_i - c)/h). Requires
    at least p+2 such observations spanning at least p+2 distinct scores.
    """
    y = data.outcome if values is None else np.asarray(values, dtype=float)
    return fit_side(data.score, y, design.cutoff, side, p, h, kernel)


def nn_variances(
    score_side: np.ndarray, values_side: np.ndarray, j: int = NN_NEIGHBORS
) -> np.ndarray:
    """Per-observation nearest-neighbour variance estimates for one side.

    sigma2_i = j/(j+1) (y_i - mean of j nearest same-side neighbours)^2,
    returned in the input row order.
    """
    n = score_side.shape[0]
    if n < j + 1:
        raise InsufficientObservations("side", j + 1, n)
    order = np.argsort(score_side, kind="stable")
    sig_sorted = _accel.nn_sigma2(
        np.ascontiguousarray(score_side[order]),
        np.ascontiguousarray(values_side[order]),
        j,
    )
    out = np.empty(n)
    out[order] = sig_sorted
    return out


def nn_covariances(
    score_side: np.ndarray,
    values_a: np.ndarray,
    values_b: np.ndarray,
    j: int = NN_NEIGHBORS,
) -> np.ndarray:
    """Nearest-neighbour covariance analogue of :func:`nn_variances`."""
    n = score_side.shape[0]
    if n < j + 1:
        raise InsufficientObservations("side", j + 1, n)
    order = np.argsort(score_side, kind="stable")
    cross_sorted = _accel.nn_cross(
        np.ascontiguousarray(score_side[order]),
        np.ascontiguousarray(values_a[order]),
        np.ascontiguousarray(values_b[order]),
        j,
    )
    out = np.empty(n)
    out[order] = cross_sorted
    return out


def intercept_variance(
    fit: LocalFit,
    data: RDDataset,
    design: RDDesign,
    side: CutoffSide,
    h: float,
    kernel: Kernel,
    method: VarianceMethod = VarianceMethod.NEAREST_NEIGHBOR,
    values: np.ndarray | None = None,
) -> VarianceEstimate:
    """Heteroskedasticity-robust sandwich variance of the fitted intercept.

    The intercept is l'y for the fit's linear weights l, so its variance is
    sum_i l_i^2 sigma2_i with sigma2_i either nearest-neighbour residual
    variances (computed against the full same-side sample) or squared WLS
    residuals.
    """
    y = data.outcome if values is None else np.asarray(values, dtype=float)
    if method is VarianceMethod.PLUG_IN_RESIDUAL:
        sigma2 = fit.residuals**2
    else:
        side_rows = np.flatnonzero(side_mask(data.score, design.cutoff, side))
        sigma2_side = nn_variances(data.score[side_rows], y[side_rows])
        position = {row: k for k, row in enumerate(side_rows)}
        sigma2 = sigma2_side[[position[row] for row in fit.index]]
    var = float(np.sum(fit.intercept_weights**2 * sigma2))
    return VarianceEstimate(intercept_variance=var, method=method)
