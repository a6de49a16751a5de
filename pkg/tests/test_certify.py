import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughheat.certify import (
    Cutoff,
    _safe_ratio,
    certify_harnack,
    certify_limit_behavior,
    certify_local_bound,
    certify_max_principle,
    certify_pointwise_harnack,
    check_caccioppoli,
    estimate_hoelder,
    lattice_pairs,
)
from roughheat.grid import ContainmentError, make_grid
from roughheat.kernel import estimate_kernel
from roughheat.solver import Boundary, PreconditionError, ProblemSpec, SolutionField, solve
from roughheat.structure import LinearCoefficients, StructureBounds, linear_structure


def _const(grid, c=1.0):
    return SolutionField(grid, np.full(grid.field_shape, c), {})


@pytest.fixture(scope="module")
def unit():
    return make_grid(1, [0, 1], 1 / 64, 1.0, 1 / 64)


def test_local_bound_constant_solution(unit):
    cert = certify_local_bound(_const(unit), ((0.5,), 1.0), 0.25, theta=0.99, k=0.0)
    # Q(3 rho) has edge 3/4 and duration 9/16; rho^{-3/2} = 8
    expected = 1 / (8 * math.sqrt(0.75 * 9 / 16))
    assert cert.passed
    assert math.isclose(cert.constants["C"], expected, rel_tol=1e-9)
    assert math.isclose(expected, 0.19245, rel_tol=1e-4)


def test_local_bound_containment(unit):
    with pytest.raises(ContainmentError):
        certify_local_bound(_const(unit), ((0.1,), 1.0), 0.25)


def test_harnack_of_constant_is_one(unit):
    cert = certify_harnack(_const(unit, 3.0), ((0.5,), 1.0), 0.25, theta=0.99)
    assert cert.passed and math.isclose(cert.constants["C"], 1.0)


def test_harnack_rejects_negative(unit):
    with pytest.raises(PreconditionError):
        certify_harnack(_const(unit, -1.0), ((0.5,), 1.0), 0.25, theta=0.99)


def test_max_principle_pass_and_fail(unit):
    b = StructureBounds.from_fields(unit, 1.0, 1.0, {})
    x = unit.axis_centers(0)
    spec = ProblemSpec("linear_homogeneous", LinearCoefficients.heat(unit), np.sin(np.pi * x), unit, Boundary("dirichlet", 0.0))
    u = solve(spec)
    assert certify_max_principle(u, 1.0, b).passed
    bumped = u.values.copy()
    bumped[10, 32] = 2.0
    cert = certify_max_principle(SolutionField(unit, bumped, {}), 1.0, b)
    assert not cert.passed and cert.constants["extreme"] == 2.0
    with pytest.raises(PreconditionError):
        certify_max_principle(u, 0.5, b)


def test_pointwise_harnack():
    g = make_grid(1, [-6, 6], 1 / 16, 0.5, 1 / 128)
    k = estimate_kernel(LinearCoefficients.heat(g), g, [1 / 32])
    pairs = lattice_pairs(np.array([-0.5, 1 / 32, 0.5]), [0.125, 0.25, 0.5])
    assert len(pairs) == 3 * 9
    cert = certify_pointwise_harnack(k.as_solution(), pairs)
    assert cert.passed and 0 < cert.constants["C"] < 5
    flat = certify_pointwise_harnack(_const(g), pairs)
    assert flat.constants["C"] == 0.0


def test_pointwise_harnack_needs_ordered_times(unit):
    with pytest.raises(PreconditionError):
        certify_pointwise_harnack(_const(unit), [(((0.5,), 0.2), ((0.5,), 0.4))])
    with pytest.raises(PreconditionError):
        certify_pointwise_harnack(_const(unit), [])


def test_hoelder_of_linear_function():
    g = make_grid(1, [0, 1], 1 / 256, 1.0, 1 / 64)
    x = g.axis_centers(0)
    u = SolutionField(g, np.broadcast_to(x, g.field_shape).copy(), {})
    cert = estimate_hoelder(u, ((0.5,), 0.75), [0.4, 0.2, 0.1])
    assert cert.passed
    assert abs(cert.constants["alpha"] - 1) < 0.1
    assert list(cert.details["radii"]) == [0.4, 0.2, 0.1]


def test_hoelder_constant_is_lower_bound_only(unit):
    cert = estimate_hoelder(_const(unit), ((0.5,), 0.75), [0.2, 0.1])
    assert not cert.passed
    assert cert.details["alpha_is_lower_bound"]


def test_limit_behavior_not_applicable_for_zero(unit):
    cert = certify_limit_behavior(_const(unit, 0.0), 1.0)
    assert not cert.applicable and not cert.passed
    assert cert.constants["M"] == 0


def test_limit_behavior_heat_kernel():
    g = make_grid(1, [-6, 6], 1 / 32, 0.5, 1 / 256)
    k = estimate_kernel(LinearCoefficients.heat(g), g, [1 / 64])
    cert = certify_limit_behavior(k.as_solution(), 1.0, center=[1 / 64])
    assert cert.passed
    # mass of the heat kernel in |x|^2 < t is erf(1/2)
    assert abs(cert.constants["M"] - math.erf(0.5)) < 5e-3
    assert len(cert.details["t"]) == len(cert.details["mass"])


pos = st.floats(0.05, 1.0)


@given(c=st.floats(-1, 1), r=pos, x=st.floats(-3, 3), t=st.floats(0, 2), t_on=st.floats(0, 0.5), ramp=pos)
def test_cutoff_properties(c, r, x, t, t_on, ramp):
    eta = Cutoff((c,), (r,), t_on, ramp)
    pt = np.array([[x]])
    v = float(eta.value(pt, t)[0])
    assert 0 <= v <= 1
    if abs(x - c) >= r or t <= t_on:
        assert v == 0
    step = 1e-6
    fd = (float(eta.value(pt + step, t)[0]) - float(eta.value(pt - step, t)[0])) / (2 * step)
    assert abs(fd - float(eta.grad(pt, t)[0, 0])) < 1e-4 / r**2


def test_caccioppoli_kappa_zero_on_heat():
    g = make_grid(1, [0, 1], 1 / 32, 0.25, 1 / 128)
    x = g.axis_centers(0)
    lc = LinearCoefficients.heat(g)
    u = solve(ProblemSpec("linear_homogeneous", lc, np.sin(np.pi * x), g, Boundary("dirichlet", 0.0)))
    eta = Cutoff((0.5,), (0.4,), 0.02, 0.05)
    cert = check_caccioppoli(u, eta, 1.0, 0.0, linear_structure(lc), [0.125, 0.25])
    assert cert.passed
    assert 0 < cert.constants["max_ratio"] < 1
    assert len(cert.details["rows"]) == 2


def test_caccioppoli_preconditions(unit):
    lc = LinearCoefficients.heat(unit)
    eta = Cutoff((0.5,), (0.4,), 0.02, 0.05)
    with pytest.raises(PreconditionError):
        check_caccioppoli(_const(unit), eta, 0.5, 0.1, linear_structure(lc), [0.5])
    with pytest.raises(ValueError):
        check_caccioppoli(_const(unit), eta, 1.0, 0.1, linear_structure(lc), [0.5], reading="other")


def test_safe_ratio():
    assert np.array_equal(_safe_ratio(np.zeros(3), 0.0), np.zeros(3))
    assert np.array_equal(_safe_ratio(np.ones(2), 2.0), [0.5, 0.5])
    with pytest.raises(PreconditionError):
        _safe_ratio(np.ones(2), 0.0)
