"""Hot inner loops with a numba path and a pure-numpy path.

Each public kernel has a ``*_numpy`` and a ``*_numba`` implementation with the
same signature; the unsuffixed name is bound according to
:data:`roughheat._accel.USE_NUMBA`. Tests exercise both paths explicitly.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import solve_banded

from ._accel import USE_NUMBA, njit

__all__ = [
    "tridiag_solve",
    "window_sum",
    "window_max",
    "window_min",
    "harnack_exponent_max",
    "BACKEND",
]


# ---------------------------------------------------------------------------
# Tridiagonal solve (1-D implicit steps)
# ---------------------------------------------------------------------------


def tridiag_solve_numpy(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``rhs`` may carry several columns."""
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs, check_finite=False)


@njit(cache=True)
def _thomas(lower, diag, upper, rhs):
    n = diag.shape[0]
    m = rhs.shape[1]
    cp = np.empty(n)
    out = np.empty((n, m))
    dp = np.empty((n, m))
    beta = diag[0]
    cp[0] = upper[0] / beta if n > 1 else 0.0
    for j in range(m):
        dp[0, j] = rhs[0, j] / beta
    for i in range(1, n):
        beta = diag[i] - lower[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = upper[i] / beta
        for j in range(m):
            dp[i, j] = (rhs[i, j] - lower[i - 1] * dp[i - 1, j]) / beta
    for j in range(m):
        out[n - 1, j] = dp[n - 1, j]
    for i in range(n - 2, -1, -1):
        for j in range(m):
            out[i, j] = dp[i, j] - cp[i] * out[i + 1, j]
    return out


def tridiag_solve_numba(lower, diag, upper, rhs):
    rhs = np.asarray(rhs, dtype=np.float64)
    flat = rhs.ndim == 1
    r2 = rhs.reshape(rhs.shape[0], -1)
    out = _thomas(
        np.ascontiguousarray(lower, dtype=np.float64),
        np.ascontiguousarray(diag, dtype=np.float64),
        np.ascontiguousarray(upper, dtype=np.float64),
        np.ascontiguousarray(r2),
    )
    return out[:, 0] if flat else out.reshape(rhs.shape)


# ---------------------------------------------------------------------------
# Sliding windows along one axis (valid windows only)
# ---------------------------------------------------------------------------


def window_sum_numpy(a, width, axis):
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, -1)
    c = np.cumsum(a, axis=-1)
    c = np.concatenate([np.zeros(a.shape[:-1] + (1,)), c], axis=-1)
    out = c[..., width:] - c[..., :-width]
    return np.moveaxis(out, -1, axis)


def _window_extreme_numpy(a, width, axis, fn):
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, -1)
    out = fn(sliding_window_view(a, width, axis=-1), axis=-1)
    return np.moveaxis(out, -1, axis)


def window_max_numpy(a, width, axis):
    return _window_extreme_numpy(a, width, axis, np.max)


def window_min_numpy(a, width, axis):
    return _window_extreme_numpy(a, width, axis, np.min)


@njit(cache=True)
def _window_sum_rows(a, width):
    rows, n = a.shape
    m = n - width + 1
    out = np.empty((rows, m))
    for r in range(rows):
        s = 0.0
        for i in range(width):
            s += a[r, i]
        out[r, 0] = s
        for i in range(1, m):
            s += a[r, i + width - 1] - a[r, i - 1]
            out[r, i] = s
    return out


@njit(cache=True)
def _window_max_rows(a, width, sign):
    # sign=+1 for max, -1 for min; monotone deque per row
    rows, n = a.shape
    m = n - width + 1
    out = np.empty((rows, m))
    dq = np.empty(n, dtype=np.int64)
    for r in range(rows):
        head = 0
        tail = 0
        for i in range(n):
            v = sign * a[r, i]
            while tail > head and sign * a[r, dq[tail - 1]] <= v:
                tail -= 1
            dq[tail] = i
            tail += 1
            if dq[head] <= i - width:
                head += 1
            if i >= width - 1:
                out[r, i - width + 1] = a[r, dq[head]]
    return out


def _rows_call(kernel, a, width, axis, *extra):
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, -1)
    shape = a.shape
    r2 = np.ascontiguousarray(a.reshape(-1, shape[-1]))
    out = kernel(r2, width, *extra)
    out = out.reshape(shape[:-1] + (out.shape[-1],))
    return np.moveaxis(out, -1, axis)


def window_sum_numba(a, width, axis):
    return _rows_call(_window_sum_rows, a, width, axis)


def window_max_numba(a, width, axis):
    return _rows_call(_window_max_rows, a, width, axis, 1.0)


def window_min_numba(a, width, axis):
    return _rows_call(_window_max_rows, a, width, axis, -1.0)


# ---------------------------------------------------------------------------
# Pointwise Harnack exponent over a pair list
# ---------------------------------------------------------------------------


def harnack_exponent_max_numpy(u_early, u_late, dist2, t_late, t_early, k):
    """Largest ``log((u(y,s)+k)/(u(x,t)+k)) / (|x-y|^2/(t-s) + t/s)``.

    Returns the maximum and the index of the maximizing pair.
    """
    num = np.log((u_early + k) / (u_late + k))
    den = dist2 / (t_late - t_early) + t_late / t_early
    ratio = num / den
    i = int(np.argmax(ratio))
    return float(ratio[i]), i


@njit(cache=True)
def _harnack_loop(u_early, u_late, dist2, t_late, t_early, k):
    best = -np.inf
    arg = 0
    for i in range(u_early.shape[0]):
        num = np.log((u_early[i] + k) / (u_late[i] + k))
        den = dist2[i] / (t_late[i] - t_early[i]) + t_late[i] / t_early[i]
        r = num / den
        if r > best:
            best = r
            arg = i
    return best, arg


def harnack_exponent_max_numba(u_early, u_late, dist2, t_late, t_early, k):
    best, arg = _harnack_loop(
        *(np.ascontiguousarray(v, dtype=np.float64) for v in (u_early, u_late, dist2, t_late, t_early)),
        float(k),
    )
    return float(best), int(arg)


if USE_NUMBA:
    tridiag_solve = tridiag_solve_numba
    window_sum = window_sum_numba
    window_max = window_max_numba
    window_min = window_min_numba
    harnack_exponent_max = harnack_exponent_max_numba
    BACKEND = "numba"
else:
    tridiag_solve = tridiag_solve_numpy
    window_sum = window_sum_numpy
    window_max = window_max_numpy
    window_min = window_min_numpy
    harnack_exponent_max = harnack_exponent_max_numpy
    BACKEND = "numpy"
