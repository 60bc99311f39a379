"""Hot numeric kernels with a numba-compiled fast path.

The compiled path is selected at import time; set ``RDLAB_NUMBA=0`` in the
environment to force the pure-Python fallback (same algorithms, same
outputs, no compilation). ``benchmarks/bench_kernels.py`` compares the two.

Randomness is counter-based: every draw is a pure integer function of
(seed, permutation index, step), so results never depend on evaluation
order or worker count, and the fallback reproduces the compiled stream
bit for bit.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = False
if os.environ.get("RDLAB_NUMBA", "1") != "0":
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        pass

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finaliser on masked Python integers."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def child_seed(master: int, index: int) -> int:
    """Derive the seed of subtask ``index`` from a master seed.

    Pure function of its arguments, so replications can run in any order
    (or on any number of workers) and still see identical streams.
    """
    return mix64((mix64(master & _MASK64) ^ (index & _MASK64)) & _MASK64)


def _perm_count_diff_means_py(values, n_treat, reps, seed, threshold):
    # Count Monte Carlo fixed-margins assignments whose |difference in
    # means| reaches `threshold`. Python-int SplitMix64 stream; identical
    # to the compiled path.
    n = values.shape[0]
    total = 0.0
    for i in range(n):
        total += values[i]
    idx = np.empty(n, np.int64)
    count = 0
    for k in range(reps):
        state = mix64((seed ^ ((k + 1) * _GOLDEN)) & _MASK64)
        for i in range(n):
            idx[i] = i
        tsum = 0.0
        for t in range(n_treat):
            state = mix64(state)
            j = t + int(state % (n - t))
            tmp = idx[t]
            idx[t] = idx[j]
            idx[j] = tmp
            tsum += values[idx[t]]
        stat = tsum / n_treat - (total - tsum) / (n - n_treat)
        if abs(stat) >= threshold:
            count += 1
    return count


def _perm_count_two_stage_py(y, d, n_treat, reps, seed, threshold):
    # Same assignment stream as the diff-in-means kernel; the statistic is
    # the in-window two-stage ratio. Zero first-stage draws count as
    # exceedances (conservative).
    n = y.shape[0]
    total_y = 0.0
    total_d = 0.0
    for i in range(n):
        total_y += y[i]
        total_d += d[i]
    idx = np.empty(n, np.int64)
    count = 0
    for k in range(reps):
        state = mix64((seed ^ ((k + 1) * _GOLDEN)) & _MASK64)
        for i in range(n):
            idx[i] = i
        ty = 0.0
        td = 0.0
        for t in range(n_treat):
            state = mix64(state)
            j = t + int(state % (n - t))
            tmp = idx[t]
            idx[t] = idx[j]
            idx[j] = tmp
            ty += y[idx[t]]
            td += d[idx[t]]
        num = ty / n_treat - (total_y - ty) / (n - n_treat)
        den = td / n_treat - (total_d - td) / (n - n_treat)
        if den == 0.0:
            count += 1
        elif abs(num / den) >= threshold:
            count += 1
    return count


def _nn_sigma2_py(x, y, j):
    # Nearest-neighbour residual variances on score-sorted data:
    # sigma2_i = j/(j+1) * (y_i - mean of j nearest neighbours)^2.
    # Distance ties break toward the lower-index (left) neighbour.
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        lo = i - 1
        hi = i + 1
        acc = 0.0
        for _ in range(j):
            if lo >= 0 and (hi >= n or x[i] - x[lo] <= x[hi] - x[i]):
                acc += y[lo]
                lo -= 1
            else:
                acc += y[hi]
                hi += 1
        diff = y[i] - acc / j
        out[i] = diff * diff * j / (j + 1.0)
    return out


def _nn_cross_py(x, y, z, j):
    # Nearest-neighbour residual cross-products for two outcomes sharing
    # the same score: j/(j+1) * (y_i - nn mean y) * (z_i - nn mean z).
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        lo = i - 1
        hi = i + 1
        acc_y = 0.0
        acc_z = 0.0
        for _ in range(j):
            if lo >= 0 and (hi >= n or x[i] - x[lo] <= x[hi] - x[i]):
                acc_y += y[lo]
                acc_z += z[lo]
                lo -= 1
            else:
                acc_y += y[hi]
                acc_z += z[hi]
                hi += 1
        out[i] = (y[i] - acc_y / j) * (z[i] - acc_z / j) * j / (j + 1.0)
    return out


if NUMBA_ENABLED:
    _U_GOLDEN = np.uint64(_GOLDEN)
    _U_M1 = np.uint64(0xBF58476D1CE4E5B9)
    _U_M2 = np.uint64(0x94D049BB133111EB)

    @_njit(cache=True)
    def _mix64_u64(z):
        z = z + _U_GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _U_M1
        z = (z ^ (z >> np.uint64(27))) * _U_M2
        return z ^ (z >> np.uint64(31))

    @_njit(cache=True)
    def _perm_count_diff_means_jit(values, n_treat, reps, seed, threshold):
        n = values.shape[0]
        total = 0.0
        for i in range(n):
            total += values[i]
        idx = np.empty(n, np.int64)
        count = 0
        useed = np.uint64(seed)
        for k in range(reps):
            state = _mix64_u64(useed ^ (np.uint64(k + 1) * _U_GOLDEN))
            for i in range(n):
                idx[i] = i
            tsum = 0.0
            for t in range(n_treat):
                state = _mix64_u64(state)
                j = t + int(state % np.uint64(n - t))
                tmp = idx[t]
                idx[t] = idx[j]
                idx[j] = tmp
                tsum += values[idx[t]]
            stat = tsum / n_treat - (total - tsum) / (n - n_treat)
            if abs(stat) >= threshold:
                count += 1
        return count

    @_njit(cache=True)
    def _perm_count_two_stage_jit(y, d, n_treat, reps, seed, threshold):
        n = y.shape[0]
        total_y = 0.0
        total_d = 0.0
        for i in range(n):
            total_y += y[i]
            total_d += d[i]
        idx = np.empty(n, np.int64)
        count = 0
        useed = np.uint64(seed)
        for k in range(reps):
            state = _mix64_u64(useed ^ (np.uint64(k + 1) * _U_GOLDEN))
            for i in range(n):
                idx[i] = i
            ty = 0.0
            td = 0.0
            for t in range(n_treat):
                state = _mix64_u64(state)
                j = t + int(state % np.uint64(n - t))
                tmp = idx[t]
                idx[t] = idx[j]
                idx[j] = tmp
                ty += y[idx[t]]
                td += d[idx[t]]
            num = ty / n_treat - (total_y - ty) / (n - n_treat)
            den = td / n_treat - (total_d - td) / (n - n_treat)
            if den == 0.0:
                count += 1
            elif abs(num / den) >= threshold:
                count += 1
        return count

    perm_count_diff_means = _perm_count_diff_means_jit
    perm_count_two_stage = _perm_count_two_stage_jit
    nn_sigma2 = _njit(cache=True)(_nn_sigma2_py)
    nn_cross = _njit(cache=True)(_nn_cross_py)
else:
    perm_count_diff_means = _perm_count_diff_means_py
    perm_count_two_stage = _perm_count_two_stage_py
    nn_sigma2 = _nn_sigma2_py
    nn_cross = _nn_cross_py
