"""Benchmark the numba-compiled kernels against the pure-Python fallback.

Run:  python3 benchmarks/bench_kernels.py

The same comparison can be forced package-wide by setting RDLAB_NUMBA=0,
which selects the fallback path at import time.
"""

import time

import numpy as np

from rdlab import _accel


def _time(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    if not _accel.NUMBA_ENABLED:
        raise SystemExit(
            "numba path disabled (RDLAB_NUMBA=0 or numba missing); "
            "nothing to compare"
        )
    rng = np.random.default_rng(0)

    rows = []

    values = rng.normal(size=120)
    args = (values, 60, 20_000, 12345, 0.1)
    _accel._perm_count_diff_means_jit(*args)  # compile before timing
    jit_t = _time(_accel._perm_count_diff_means_jit, *args)
    py_t = _time(lambda *a: _accel._perm_count_diff_means_py(*a), *args, repeat=1)
    assert _accel._perm_count_diff_means_py(*args) == int(
        _accel._perm_count_diff_means_jit(*args)
    )
    rows.append(("perm_count_diff_means (n=120, 20k reps)", py_t, jit_t))

    y = rng.normal(size=120)
    d = (rng.random(120) < 0.5).astype(float)
    args2 = (y, d, 60, 20_000, 999, 0.2)
    _accel._perm_count_two_stage_jit(*args2)
    jit_t = _time(_accel._perm_count_two_stage_jit, *args2)
    py_t = _time(lambda *a: _accel._perm_count_two_stage_py(*a), *args2, repeat=1)
    rows.append(("perm_count_two_stage (n=120, 20k reps)", py_t, jit_t))

    x = np.sort(rng.uniform(0, 1, 200_000))
    yy = rng.normal(size=200_000)
    _accel.nn_sigma2(x, yy, 3)
    jit_t = _time(_accel.nn_sigma2, x, yy, 3)
    py_t = _time(_accel._nn_sigma2_py, x, yy, 3, repeat=1)
    np.testing.assert_array_equal(_accel.nn_sigma2(x, yy, 3), _accel._nn_sigma2_py(x, yy, 3))
    rows.append(("nn_sigma2 (n=200k, J=3)", py_t, jit_t))

    print(f"{'kernel':45s} {'python':>10s} {'numba':>10s} {'speedup':>9s}")
    for name, py_t, jit_t in rows:
        print(f"{name:45s} {py_t:>9.3f}s {jit_t:>9.3f}s {py_t / jit_t:>8.1f}x")


if __name__ == "__main__":
    main()
