import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughheat.grid import make_grid
from roughheat.structure import (
    LinearCoefficients,
    NotParabolicError,
    bounded_nonlinear_structure,
    checkerboard_field,
    random_piecewise_field,
)
from roughheat.solver import (
    Boundary,
    ProblemSpec,
    SolverConfig,
    mass_balance,
    propagate,
    random_bumps,
    solve,
    weak_residual,
)


def _sine_problem(cells, dt, weight):
    g = make_grid(1, [0, 1], 1 / cells, 0.25, dt)
    x = g.axis_centers(0)
    spec = ProblemSpec("linear_homogeneous", LinearCoefficients.heat(g), np.sin(np.pi * x), g, Boundary("dirichlet", 0.0))
    u = solve(spec, SolverConfig(time_scheme_weight=weight))
    exact = np.exp(-np.pi**2 * g.times)[:, None] * np.sin(np.pi * x)[None, :]
    return float(np.max(np.abs(u.values - exact)))


def test_heat_sine_mode_converges():
    e1 = _sine_problem(32, 1 / 256, 0.5)
    e2 = _sine_problem(64, 1 / 512, 0.5)
    assert e1 < 5e-4
    assert 1.8 < np.log2(e1 / e2) < 2.3


def test_backward_euler_is_first_order_in_time():
    e1 = _sine_problem(256, 1 / 32, 1.0)
    e2 = _sine_problem(256, 1 / 64, 1.0)
    assert 0.8 < np.log2(e1 / e2) < 1.2


@pytest.mark.parametrize("n", [1, 2])
def test_no_flux_conserves_mass(n):
    g = make_grid(n, [0, 1], 1 / 16, 0.25, 1 / 64)
    a = random_piecewise_field(g, seed=4, contrast=20, period=0.25)
    rng = np.random.default_rng(1)
    lc = LinearCoefficients.isotropic(a, A_vec=rng.uniform(-1, 1, g.shape + (n,)))
    u0 = rng.uniform(0, 1, g.shape)
    u = solve(ProblemSpec("linear_homogeneous", lc, u0, g))
    m = mass_balance(u)
    assert np.max(np.abs(m - m[0])) < 1e-12


@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), contrast=st.floats(1, 100))
def test_discrete_maximum_principle(seed, contrast):
    g = make_grid(2, [0, 1], 1 / 8, 0.25, 1 / 32)
    a = random_piecewise_field(g, seed=seed, contrast=contrast, period=0.25)
    u0 = np.random.default_rng(seed).uniform(-1, 2, g.shape)
    u = solve(ProblemSpec("linear_homogeneous", LinearCoefficients.isotropic(a), u0, g, Boundary("dirichlet", 0.5)))
    assert u.values.max() <= 2 + 1e-12
    assert u.values.min() >= -1 - 1e-12


def test_iterative_matches_direct():
    g = make_grid(2, [0, 1], 1 / 16, 0.125, 1 / 64)
    lc = LinearCoefficients.isotropic(checkerboard_field(g, 10, 0.5))
    u0 = np.random.default_rng(2).uniform(0, 1, g.shape)
    spec = ProblemSpec("linear_homogeneous", lc, u0, g, Boundary("dirichlet", 0.0))
    d = solve(spec, SolverConfig(linear_solver="direct"))
    i = solve(spec, SolverConfig(linear_solver="iterative", linear_solver_tol=1e-13))
    assert np.max(np.abs(d.values - i.values)) < 1e-9


def test_propagate_batches_columns():
    g = make_grid(1, [0, 1], 1 / 16, 0.125, 1 / 64)
    lc = LinearCoefficients.heat(g)
    rng = np.random.default_rng(3)
    U0 = rng.uniform(0, 1, g.shape + (3,))
    batch = propagate(lc, g, U0)
    for j in range(3):
        single = propagate(lc, g, U0[:, j])
        assert np.allclose(batch[..., j], single, atol=1e-14)
    last = propagate(lc, g, U0, store=False)
    assert last.shape[0] == 1 and np.allclose(last[0], batch[-1])


def test_full_problem_source_term():
    # u_t = u_xx + G with G = 1 and u(0) = x(1-x)/2 is stationary
    g = make_grid(1, [0, 1], 1 / 32, 0.125, 1 / 64)
    x = g.axis_centers(0)
    lc = LinearCoefficients.heat(g, G=np.ones(g.shape))
    spec = ProblemSpec("linear_full", lc, x * (1 - x) / 2, g, Boundary("dirichlet", 0.0))
    u = solve(spec)
    assert np.max(np.abs(u.values[-1] - u.values[0])) < 1e-3


def _quasilinear_residual(cells, steps):
    g = make_grid(1, [0, 1], 1 / cells, 0.125, 0.125 / steps)
    x = g.axis_centers(0)
    spec = ProblemSpec("quasilinear", bounded_nonlinear_structure(0.5), np.sin(np.pi * x), g, Boundary("dirichlet", 0.0))
    u = solve(spec)
    assert np.all(np.isfinite(u.values))
    return float(np.max(weak_residual(u, spec, random_bumps(g, 6, seed=0))))


def test_quasilinear_weak_residual_shrinks_under_refinement():
    coarse = _quasilinear_residual(32, 16)
    fine = _quasilinear_residual(64, 64)
    assert fine < 0.6 * coarse
    assert fine < 5e-2


def test_quasilinear_rejects_trapezoidal():
    g = make_grid(1, [0, 1], 1 / 16, 0.125, 1 / 64)
    spec = ProblemSpec("quasilinear", bounded_nonlinear_structure(0.5), np.zeros(g.shape), g)
    with pytest.raises(ValueError):
        solve(spec, SolverConfig(time_scheme_weight=0.5))


def test_declared_ellipticity_is_checked():
    g = make_grid(1, [0, 1], 1 / 16, 0.125, 1 / 64)
    lc = LinearCoefficients(g, np.full(g.shape + (1, 1), 0.5), nu=1.0)
    with pytest.raises(NotParabolicError):
        solve(ProblemSpec("linear_homogeneous", lc, np.zeros(g.shape), g))


@pytest.mark.parametrize(
    "kwargs", [dict(time_scheme_weight=0.3), dict(picard_tol=0), dict(linear_solver="cg")]
)
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_problem_spec_validation():
    g = make_grid(1, [0, 1], 1 / 16, 0.125, 1 / 64)
    with pytest.raises(ValueError):
        ProblemSpec("linear_homogeneous", LinearCoefficients.heat(g), np.zeros(5), g)
    with pytest.raises(ValueError):
        ProblemSpec("linear_homogeneous", LinearCoefficients.heat(g, G=np.ones(g.shape)), np.zeros(g.shape), g)
    with pytest.raises(TypeError):
        ProblemSpec("quasilinear", LinearCoefficients.heat(g), np.zeros(g.shape), g)


_BACKEND_SCRIPT = """
import json, numpy as np
from roughheat import _kernels
from roughheat.grid import make_grid
from roughheat.structure import LinearCoefficients, checkerboard_field
from roughheat.solver import Boundary, ProblemSpec, solve
g = make_grid(1, [0, 1], 1 / 32, 0.125, 1 / 64)
lc = LinearCoefficients.isotropic(checkerboard_field(g, 10, 0.25))
x = g.axis_centers(0)
u = solve(ProblemSpec("linear_homogeneous", lc, np.exp(-50 * (x - 0.4) ** 2), g, Boundary("dirichlet", 0.0)))
print(json.dumps({"backend": _kernels.BACKEND, "u": u.values[-1].tolist()}))
"""


def test_numpy_fallback_matches_numba_backend():
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, ROUGHHEAT_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _BACKEND_SCRIPT], env=env, capture_output=True, text=True, timeout=300)
        assert res.returncode == 0, res.stderr
        outs[flag] = json.loads(res.stdout.strip().splitlines()[-1])
    assert outs["0"]["backend"] == "numpy"
    assert outs["1"]["backend"] == "numba"
    assert np.allclose(outs["0"]["u"], outs["1"]["u"], rtol=1e-12, atol=1e-14)
