"""Local randomization analysis: window selection and Fisherian inference.

Assignments are permuted with fixed margins: the number of units on the
at-or-above side of the cutoff is held at its observed value. Exact
enumeration is used whenever the number of assignments is at most
``EXACT_ENUMERATION_LIMIT``; otherwise Monte Carlo draws are generated
from a counter-based stream (see :mod:`rdlab._accel`), so p-values are a
pure function of (data, seed, reps). Difference statistics are oriented
as at-or-above minus below, matching the continuity module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from . import _accel
from .continuity import Estimand, critical_value, _two_sided_p
from .dataset import RDDataset, RDDesign, score_profile
from .errors import (
    EmptyGrid,
    EmptySide,
    InsufficientObservations,
    ZeroFirstStage,
)

# C(20, 10) = 184,756: every window of at most 20 units enumerates exactly.
EXACT_ENUMERATION_LIMIT = 184_756

# Seeds handed to the compiled kernels are masked to 63 bits so they fit
# the int64 argument type; the stream quality is unaffected.
_SEED_MASK = (1 << 63) - 1


class InferenceMethod(Enum):
    FISHER_EXACT = "fisher_exact"
    FISHER_MONTE_CARLO = "fisher_monte_carlo"
    LARGE_SAMPLE = "large_sample"


class TestStatistic(Enum):
    DIFF_MEANS = "diff_means"
    TWO_STAGE = "two_stage"


@dataclass(frozen=True)
class Window:
    """Closed score interval [lower, upper] containing the cutoff."""

    lower: float
    upper: float
    n_minus: int
    n_plus: int


@dataclass(frozen=True)
class RandInfResult:
    statistic: float
    p_value: float
    method: InferenceMethod
    n_permutations: int
    seed: int
    ci: tuple[float, float] | None = None


@dataclass(frozen=True)
class WindowCandidate:
    window: Window
    min_p_value: float
    p_values: dict[str, float]


@dataclass(frozen=True)
class WindowSelectionTrace:
    candidates: tuple[WindowCandidate, ...]
    chosen: Window
    threshold: float
    seed: int
    reps: int
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class LocRandEstimate:
    """Large-sample (super-population) estimate within a window."""

    estimand: Estimand
    point: float
    se: float
    ci: tuple[float, float]
    p_value: float
    mean_below: float
    mean_above: float
    n_minus: int
    n_plus: int
    window: tuple[float, float]


def make_window(data: RDDataset, design: RDDesign, lower: float, upper: float) -> Window:
    if not (lower <= design.cutoff <= upper):
        raise ValueError("window must contain the cutoff")
    x = data.score
    n_minus = int(np.sum((x >= lower) & (x < design.cutoff)))
    n_plus = int(np.sum((x >= design.cutoff) & (x <= upper)))
    return Window(float(lower), float(upper), n_minus, n_plus)


def _window_arrays(data, design, window, target, extra=None):
    x = data.score
    mask = (x >= window.lower) & (x <= window.upper)
    values = (
        np.asarray(target, dtype=float)
        if isinstance(target, np.ndarray)
        else data.column(target)
    )
    mask &= np.isfinite(values)
    if extra is not None:
        mask &= np.isfinite(extra)
    above = x[mask] >= design.cutoff
    if not above.any():
        raise EmptySide("no observations at or above the cutoff in window")
    if above.all():
        raise EmptySide("no observations below the cutoff in window")
    return values[mask], above, (None if extra is None else extra[mask])


def _exact_combos(n: int, m: int) -> np.ndarray:
    # Enumerate the smaller assignment group so memory stays bounded by
    # EXACT_ENUMERATION_LIMIT * m entries.
    return np.array(list(combinations(range(n), m)), dtype=np.intp)


def _diff_stat_exact(values, combos, k, subset_is_above):
    n = values.shape[0]
    total = values.sum()
    sums = values[combos].sum(axis=1)
    if subset_is_above:
        return sums / k - (total - sums) / (n - k)
    return (total - sums) / k - sums / (n - k)


def _two_stage_exact(y, d, combos, k, subset_is_above):
    num = _diff_stat_exact(y, combos, k, subset_is_above)
    den = _diff_stat_exact(d, combos, k, subset_is_above)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = num / den
    stat[~np.isfinite(stat)] = np.inf  # zero first stage: counted as extreme
    return stat


def _fisher_p(values, above, d, statistic, seed, reps, combos=None):
    """Two-sided fixed-margins p-value; returns (stat, p, method, M)."""
    n = values.shape[0]
    k = int(above.sum())
    vals_above = values[above]
    vals_below = values[~above]
    if statistic is TestStatistic.TWO_STAGE:
        den = float(d[above].mean() - d[~above].mean())
        if den == 0.0:
            raise ZeroFirstStage("observed first-stage difference is zero")
        obs = float(vals_above.mean() - vals_below.mean()) / den
    else:
        obs = float(vals_above.mean() - vals_below.mean())
    n_assignments = math.comb(n, k)
    if n_assignments <= EXACT_ENUMERATION_LIMIT:
        subset_is_above = k <= n - k
        if combos is None:
            combos = _exact_combos(n, k if subset_is_above else n - k)
        if statistic is TestStatistic.TWO_STAGE:
            stats = _two_stage_exact(values, d, combos, k, subset_is_above)
        else:
            stats = _diff_stat_exact(values, combos, k, subset_is_above)
        count = int(np.sum(np.abs(stats) >= abs(obs)))
        return obs, count / n_assignments, InferenceMethod.FISHER_EXACT, n_assignments
    contiguous = np.ascontiguousarray(values)
    if statistic is TestStatistic.TWO_STAGE:
        count = _accel.perm_count_two_stage(
            contiguous, np.ascontiguousarray(d), k, reps, seed & _SEED_MASK, abs(obs)
        )
    else:
        count = _accel.perm_count_diff_means(
            contiguous, k, reps, seed & _SEED_MASK, abs(obs)
        )
    return (
        obs,
        (1 + count) / (reps + 1),
        InferenceMethod.FISHER_MONTE_CARLO,
        reps + 1,
    )


def fisher_test(
    data: RDDataset,
    design: RDDesign,
    window: Window,
    target="outcome",
    statistic: TestStatistic = TestStatistic.DIFF_MEANS,
    seed: int = 0,
    reps: int = 1000,
) -> RandInfResult:
    """Fisherian test of the sharp null of no effect within the window.

    The randomization distribution holds the observed at-or-above count
    fixed; the two-sided p-value is the share of assignments whose
    |statistic| reaches the observed one (ties count, so p >= 1/M).
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    extra = None
    if statistic is TestStatistic.TWO_STAGE:
        if data.received is None:
            raise ValueError("two-stage statistic requires a received column")
        extra = data.received
    values, above, d = _window_arrays(data, design, window, target, extra)
    obs, p, method, m = _fisher_p(values, above, d, statistic, seed, reps)
    return RandInfResult(
        statistic=obs, p_value=p, method=method, n_permutations=m, seed=seed
    )


def fisher_ci(
    data: RDDataset,
    design: RDDesign,
    window: Window,
    tau_grid,
    seed: int = 0,
    reps: int = 1000,
    alpha: float = 0.05,
) -> tuple[float, float] | None:
    """Constant-effect confidence interval by test inversion.

    Under the model (outcome above) = (outcome below) + tau, each grid
    value is subtracted from the at-or-above group and the sharp null is
    re-tested with the same seed; the CI is the hull of grid values with
    p >= alpha, or None when every value is rejected. Valid only under the
    constant treatment effect model, and labelled as such in reports.
    """
    grid = np.asarray(tau_grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("tau grid is empty")
    values, above, _ = _window_arrays(data, design, window, "outcome")
    n, k = values.shape[0], int(above.sum())
    combos = None
    if math.comb(n, k) <= EXACT_ENUMERATION_LIMIT:
        combos = _exact_combos(n, min(k, n - k))
    kept = []
    for tau in grid:
        adjusted = values - tau * above
        _, p, _, _ = _fisher_p(
            adjusted, above, None, TestStatistic.DIFF_MEANS, seed, reps, combos
        )
        if p >= alpha:
            kept.append(float(tau))
    if not kept:
        return None
    return (min(kept), max(kept))


def _welch(values, above):
    a = values[above]
    b = values[~above]
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise InsufficientObservations("window side", 2, int(min(a.shape[0], b.shape[0])))
    var = a.var(ddof=1) / a.shape[0] + b.var(ddof=1) / b.shape[0]
    return float(a.mean()), float(b.mean()), float(var)


def superpop_estimate(
    data: RDDataset,
    design: RDDesign,
    window: Window,
    fuzzy: bool = False,
    level: float = 0.95,
) -> list[LocRandEstimate]:
    """Difference-in-means estimates with large-sample normal intervals.

    Returns one row for the outcome; with ``fuzzy=True`` adds the
    first-stage row and the two-stage ratio row (delta-method interval).
    """
    z = critical_value(level)
    y, above, _ = _window_arrays(data, design, window, "outcome")
    mean_a, mean_b, var_y = _welch(y, above)
    bounds = (window.lower, window.upper)
    n_minus, n_plus = int((~above).sum()), int(above.sum())

    def row(estimand, point, var, mean_bel, mean_abv):
        se = float(np.sqrt(max(0.0, var)))
        return LocRandEstimate(
            estimand=estimand,
            point=point,
            se=se,
            ci=(point - z * se, point + z * se),
            p_value=_two_sided_p(point, max(0.0, var)),
            mean_below=mean_bel,
            mean_above=mean_abv,
            n_minus=n_minus,
            n_plus=n_plus,
            window=bounds,
        )

    rows = [row(Estimand.SHARP_OUTCOME, mean_a - mean_b, var_y, mean_b, mean_a)]
    if not fuzzy:
        return rows
    if data.received is None:
        raise ValueError("fuzzy estimation requires a received-treatment column")
    d, above_d, _ = _window_arrays(data, design, window, "received")
    dmean_a, dmean_b, var_d = _welch(d, above_d)
    theta_d = dmean_a - dmean_b
    rows.append(row(Estimand.FIRST_STAGE, theta_d, var_d, dmean_b, dmean_a))
    if abs(theta_d) < 1e-12:
        raise ZeroFirstStage("first-stage difference in means is numerically zero")
    theta_y = mean_a - mean_b
    ratio = theta_y / theta_d
    na, nb = int(above.sum()), int((~above).sum())
    cov = float(
        np.cov(y[above], d[above], ddof=1)[0, 1] / na
        + np.cov(y[~above], d[~above], ddof=1)[0, 1] / nb
    )
    var_ratio = (var_y + ratio**2 * var_d - 2.0 * ratio * cov) / theta_d**2
    rows.append(row(Estimand.FUZZY_RATIO, ratio, var_ratio, float("nan"), float("nan")))
    return rows


def _candidate_windows(data, design, min_side, wstep):
    profile = score_profile(data, design)
    c = design.cutoff
    flags = []
    if profile.max_multiplicity > 1:
        # Discrete scores: start at the innermost pair of mass points and
        # grow one mass point per side per step.
        below = profile.distinct_values[profile.distinct_values < c][::-1]
        above = profile.distinct_values[profile.distinct_values >= c]
        if below.size == 0 or above.size == 0:
            raise EmptySide("need distinct score values on both sides of the cutoff")
        bounds = [
            (float(below[k]), float(above[k]))
            for k in range(min(below.size, above.size))
        ]
        first = make_window(data, design, bounds[0][0], bounds[0][1])
        if min(first.n_minus, first.n_plus) < min_side:
            flags.append("smallest_window_below_min_side")
    else:
        x = data.score
        dist_below = np.sort(c - x[x < c])
        dist_above = np.sort(x[x >= c] - c)
        if dist_below.size < min_side:
            raise InsufficientObservations("below", min_side, int(dist_below.size))
        if dist_above.size < min_side:
            raise InsufficientObservations("at_or_above", min_side, int(dist_above.size))
        w = max(dist_below[min_side - 1], dist_above[min_side - 1])
        w_max = max(dist_below[-1], dist_above[-1])
        bounds = []
        while True:
            bounds.append((c - w, c + w))
            if w >= w_max:
                break
            w += wstep
    return [make_window(data, design, lo, hi) for lo, hi in bounds], flags


def select_window(
    data: RDDataset,
    design: RDDesign,
    covariates=None,
    threshold: float = 0.15,
    min_side: int = 10,
    wstep: float = 1.0,
    seed: int = 0,
    reps: int = 1000,
) -> WindowSelectionTrace:
    """Covariate-driven window selection for local randomization analysis.

    Candidate windows grow outward from the smallest usable one; at each
    candidate every covariate gets a Fisherian difference-in-means test,
    and selection stops at the first window whose minimum p-value falls
    below ``threshold``. The chosen window is the previous candidate; if
    the very first window already fails, it is returned with a
    ``no_balanced_window`` flag.
    """
    names = list(covariates) if covariates is not None else list(data.covariates)
    if not names:
        raise ValueError("window selection requires at least one covariate")
    windows, flags = _candidate_windows(data, design, min_side, wstep)
    evaluated: list[WindowCandidate] = []
    chosen: Window | None = None
    for i, window in enumerate(windows):
        p_values = {}
        for j, name in enumerate(names):
            cand_seed = _accel.child_seed(_accel.child_seed(seed, i), j)
            try:
                res = fisher_test(
                    data, design, window, target=name, seed=cand_seed, reps=reps
                )
                p_values[name] = res.p_value
            except EmptySide:
                p_values[name] = float("nan")
        clean = [p for p in p_values.values() if not math.isnan(p)]
        min_p = min(clean) if clean else float("nan")
        evaluated.append(WindowCandidate(window=window, min_p_value=min_p, p_values=p_values))
        if not math.isnan(min_p) and min_p < threshold:
            if i == 0:
                chosen = windows[0]
                flags = flags + ["no_balanced_window"]
            else:
                chosen = windows[i - 1]
            break
    if chosen is None:
        chosen = evaluated[-1].window
    return WindowSelectionTrace(
        candidates=tuple(evaluated),
        chosen=chosen,
        threshold=threshold,
        seed=seed,
        reps=reps,
        flags=tuple(flags),
    )
