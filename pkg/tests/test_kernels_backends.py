"""Both kernel backends must agree with each other and with dense references."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roughheat import _accel
from roughheat import _kernels as kn

BACKENDS = ["numpy", "numba"]


def _get(name, backend):
    return getattr(kn, f"{name}_{backend}")


@pytest.mark.parametrize("backend", BACKENDS)
@given(n=st.integers(2, 40), m=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_tridiag_matches_dense(backend, n, m, seed):
    rng = np.random.default_rng(seed)
    lower = -rng.uniform(0, 1, n - 1)
    upper = -rng.uniform(0, 1, n - 1)
    diag = 2.1 + rng.uniform(0, 1, n)
    rhs = rng.standard_normal((n, m))
    dense = np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
    out = _get("tridiag_solve", backend)(lower, diag, upper, rhs)
    assert np.allclose(dense @ out, rhs, atol=1e-10)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("name", ["window_sum", "window_max", "window_min"])
@given(a=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(3, 12)), elements=finite), w=st.integers(1, 3), axis=st.integers(0, 1))
def test_window_kernels_agree(name, a, w, axis):
    if a.shape[axis] < w:
        return
    x = _get(name, "numpy")(a, w, axis)
    y = _get(name, "numba")(a, w, axis)
    assert x.shape == y.shape
    assert np.allclose(x, y, atol=1e-9)


def test_window_sum_reference():
    a = np.arange(10.0).reshape(2, 5)
    assert np.array_equal(kn.window_sum_numpy(a, 2, 1), [[1, 3, 5, 7], [11, 13, 15, 17]])
    assert np.array_equal(kn.window_max_numba(a, 3, 1), [[2, 3, 4], [7, 8, 9]])


@given(seed=st.integers(0, 2**31), m=st.integers(1, 200), k=st.floats(0, 2))
def test_harnack_exponent_agrees(seed, m, k):
    rng = np.random.default_rng(seed)
    ue, ul = rng.uniform(0.01, 1, m), rng.uniform(0.01, 1, m)
    d2 = rng.uniform(0, 1, m)
    ts = rng.uniform(0.1, 1, m)
    a = kn.harnack_exponent_max_numpy(ue, ul, d2, ts + 0.5, ts, k)
    b = kn.harnack_exponent_max_numba(ue, ul, d2, ts + 0.5, ts, k)
    assert a[1] == b[1]
    assert np.isclose(a[0], b[0], rtol=1e-12)


@pytest.mark.parametrize("flag,expected", [("0", False), ("false", False), ("1", True), ("auto", True)])
def test_env_flag_resolution(flag, expected):
    if expected and not _accel.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    assert _accel._resolve(flag) is expected


def test_backend_binding_consistent():
    assert kn.BACKEND == ("numba" if _accel.USE_NUMBA else "numpy")
    assert kn.tridiag_solve is (kn.tridiag_solve_numba if _accel.USE_NUMBA else kn.tridiag_solve_numpy)
