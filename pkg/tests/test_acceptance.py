"""Acceptance gate: one test per criterion, each recording a pass/fail line.

The summary lines are printed at the end of the pytest run (see conftest).
Oracles: the constant-coefficient heat kernel, closed-form Gaussian ratios,
erf(1/2), the Newtonian potential 1/(4 pi r) and self-convergence for rough
coefficients.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE

from roughheat import cli
from roughheat.certify import (
    Cutoff,
    certify_harnack,
    certify_limit_behavior,
    certify_max_principle,
    check_caccioppoli,
    estimate_hoelder,
)
from roughheat.grid import make_grid, parabolic_boundary
from roughheat.kernel import (
    check_chapman_kolmogorov,
    elliptic_green,
    estimate_kernel,
    estimate_kernel_family,
    fit_gaussian_bounds,
)
from roughheat.solver import (
    Boundary,
    ProblemSpec,
    SolutionField,
    SolverConfig,
    random_bumps,
    solve,
    weak_residual,
)
from roughheat.structure import (
    LinearCoefficients,
    StructureBounds,
    bounded_nonlinear_structure,
    checkerboard_field,
    linear_structure,
    random_piecewise_field,
    striped_field,
)
from roughheat.widder import (
    BorelMeasure,
    TraceValue,
    gaussian_test,
    hat_partition,
    recover_atoms,
    represent,
    trace_roundtrip,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs" / "acceptance"
TRAPEZOID = SolverConfig(time_scheme_weight=0.5)


def record(num: int, ok: bool, text: str) -> None:
    ACCEPTANCE[num] = (bool(ok), text)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} {text}")


def _sine_heat(N: int, dt: float, T: float = 0.5):
    g = make_grid(1, [(0, 1)], 1 / N, T, dt)
    x = g.axis_centers(0)
    spec = ProblemSpec("linear_homogeneous", LinearCoefficients.heat(g), np.sin(np.pi * x), g, Boundary("dirichlet", 0.0))
    return g, x, spec


# ---------------------------------------------------------------------------


def test_criterion_01_solver_oracle():
    errs, t_base = [], 0.0
    for N, dt in ((128, 1 / 1024), (256, 1 / 2048)):
        g, x, spec = _sine_heat(N, dt)
        t0 = time.perf_counter()
        u = solve(spec, TRAPEZOID)
        if N == 128:
            t_base = time.perf_counter() - t0
        exact = np.exp(-np.pi**2 * u.times)[:, None] * np.sin(np.pi * x)[None]
        errs.append(float(np.max(np.abs(u.values - exact))))
    order = math.log2(errs[0] / errs[1])
    ok = errs[0] <= 1e-3 and order >= 1 and t_base < 5
    record(1, ok, f"sup error {errs[0]:.2e} (128 cells), {errs[1]:.2e} (256 cells), order {order:.2f}, {t_base:.2f}s")
    assert ok


def _random_rough_problem(seed: int) -> ProblemSpec:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 3))
    N = int(rng.integers(8, 25)) if n == 2 else int(rng.integers(16, 65))
    T = float(rng.uniform(0.05, 0.3))
    g = make_grid(n, [(0, 1)] * n, 1 / N, T, T / int(rng.integers(8, 33)))
    A = np.zeros(g.shape + (n, n))
    for d in range(n):
        contrast = float(10 ** rng.uniform(0, 3))
        A[..., d, d] = random_piecewise_field(g, int(rng.integers(1 << 30)), contrast, float(rng.uniform(0.1, 0.5))).values
    lc = LinearCoefficients(g, A, float(np.min(A[..., range(n), range(n)])))
    c = rng.uniform(-1, 1, n + 1)
    bc = Boundary("dirichlet", lambda x, t: c[0] + np.sin(3 * x @ c[1:]))
    return ProblemSpec("linear_homogeneous", lc, rng.uniform(-1, 1, g.shape), g, bc)


def test_criterion_02_discrete_max_principle():
    worst, fails = -math.inf, []
    for seed in range(50):
        spec = _random_rough_problem(seed)
        u = solve(spec)
        full = u.full()
        m_gamma = float(full[parabolic_boundary(spec.grid).mask].max())
        worst = max(worst, float(full.max()) - m_gamma)
        bounds = StructureBounds.from_fields(spec.grid, spec.coefficients.nu, 1.0)
        if not certify_max_principle(u, m_gamma, bounds, tol=1e-8).passed:
            fails.append(seed)
    ok = not fails
    record(2, ok, f"50 runs, worst max_Q - max_Gamma = {worst:.2e}, failing seeds {fails}")
    assert ok


def _checkerboard_2d(N: int, dt: float) -> tuple[ProblemSpec, SolutionField]:
    g = make_grid(2, [(0, 1), (0, 1)], 1 / N, 0.25, dt)
    xy = g.center_points()
    init = np.sin(np.pi * xy[..., 0]) * np.sin(np.pi * xy[..., 1])
    lc = LinearCoefficients.isotropic(checkerboard_field(g, 10, 0.5))
    spec = ProblemSpec("linear_homogeneous", lc, init, g, Boundary("dirichlet", 0.0))
    return spec, solve(spec, TRAPEZOID)


def test_criterion_03_weak_residual():
    spec, u = _checkerboard_2d(32, 1 / 128)
    bumps = random_bumps(spec.grid, 10, seed=7)
    r0 = weak_residual(u, spec, bumps)
    spec1, u1 = _checkerboard_2d(64, 1 / 256)
    r1 = weak_residual(u1, spec1, bumps)
    order = math.log2(r0.max() / r1.max())
    ok = r0.max() <= 5e-2 and order >= 1
    record(3, ok, f"max residual {r0.max():.2e} (32^2) -> {r1.max():.2e} (64^2), order {order:.2f}")
    assert ok


def test_criterion_04_conservation():
    drifts = []
    g1 = make_grid(1, [(-1, 1)], 1 / 64, 0.25, 1 / 256)
    k1 = estimate_kernel(LinearCoefficients.isotropic(checkerboard_field(g1, 10, 0.5)), g1, (1 / 128,), tail_tol=None)
    drifts.append(float(np.max(np.abs(k1.mass() - 1))))
    g2 = make_grid(2, [(-1, 1), (-1, 1)], 1 / 16, 0.25, 1 / 64)
    k2 = estimate_kernel(LinearCoefficients.isotropic(checkerboard_field(g2, 10, 0.5)), g2, (1 / 32, 1 / 32), tail_tol=None)
    drifts.append(float(np.max(np.abs(k2.mass() - 1))))
    ok = max(drifts) <= 1e-10
    record(4, ok, f"max |mass - 1|: n=1 {drifts[0]:.1e}, n=2 {drifts[1]:.1e}")
    assert ok


def test_criterion_05_gaussian_fit():
    g = make_grid(1, [(-4, 4)], 1 / 32, 0.25, 1 / 1024)
    k = estimate_kernel(LinearCoefficients.heat(g), g, (1 / 64,), horizon=0.2)
    fit = fit_gaussian_bounds(k, min_steps=10)
    heat_ok = 0.9 <= fit.alpha1 <= 1.1 and 0.9 <= fit.alpha2 <= 1.1 and fit.C_fit <= 1.2
    cs = []
    for N, dt in ((768, 1 / 3072), (2304, 1 / 9216)):
        gc = make_grid(1, [(-4, 4)], 8 / N, 0.25, dt)
        kc = estimate_kernel(LinearCoefficients.isotropic(checkerboard_field(gc, 10, 0.5)), gc, (1 / 64,), horizon=0.1)
        cs.append(fit_gaussian_bounds(kc, min_time=10 / 1024).C_fit)
    change = abs(cs[1] - cs[0]) / cs[0]
    ok = heat_ok and all(math.isfinite(c) for c in cs) and change <= 0.10
    record(
        5,
        ok,
        f"heat: alpha1={fit.alpha1:.3f} alpha2={fit.alpha2:.3f} C={fit.C_fit:.3f}; "
        f"checkerboard C={cs[0]:.3f} -> {cs[1]:.3f} ({100 * change:.2f}% change)",
    )
    assert ok


def test_criterion_06_chapman_kolmogorov():
    res = []
    for N in (64, 128):
        g = make_grid(1, [(-2, 2)], 4 / N, 0.125, 1 / 1024)
        res.append(check_chapman_kolmogorov(LinearCoefficients.heat(g), g, (2 / N,), 0.0, 0.05, 0.1))
    ok = res[0] <= 2e-2 and res[1] <= 1e-2
    record(6, ok, f"relative residual {res[0]:.1e} (64 cells), {res[1]:.1e} (128 cells)")
    assert ok


def test_criterion_07_harnack():
    rho = 0.125
    tp = 9 * rho**2
    g = make_grid(1, [(-4, 4)], 1 / 128, tp, 1 / 4096)
    k = estimate_kernel(LinearCoefficients.heat(g), g, (1 / 256,))
    c_emp = certify_harnack(k.as_solution(), ((1 / 256,), tp), rho).constants["C"]
    # max over the shifted cylinder sits at (xi, rho^2), min over the current one at (xi +- rho/2, 9 rho^2)
    closed = 3 * math.exp(1 / 144)
    rel = abs(c_emp - closed) / closed
    gc = make_grid(1, [(0, 1)], 1 / 64, 1.0, 1 / 256)
    ones = SolutionField(gc, np.ones(gc.field_shape))
    c_one = certify_harnack(ones, ((0.5,), 0.75), 0.25).constants["C"]
    finite = {}
    for contrast in (1, 10, 100):
        gk = make_grid(1, [(-1, 1)], 1 / 128, tp, 1 / 4096)
        kk = estimate_kernel(LinearCoefficients.isotropic(checkerboard_field(gk, contrast, 0.5)), gk, (1 / 256,), tail_tol=None)
        finite[contrast] = certify_harnack(kk.as_solution(), ((1 / 256,), tp), rho).constants["C"]
    ok = rel <= 0.05 and abs(c_one - 1) <= 1e-10 and all(math.isfinite(v) for v in finite.values())
    record(
        7,
        ok,
        f"C_emp={c_emp:.4f} vs closed form {closed:.4f} ({100 * rel:.2f}%); constant C={c_one:.12f}; "
        + ", ".join(f"contrast {c}: C={v:.3f}" for c, v in finite.items()),
    )
    assert ok


def _hoelder(N: int, lc_of) -> float:
    g = make_grid(2, [(0, 1), (0, 1)], 1 / N, 0.5, 1 / 256)
    pts = g.center_points()
    bc = Boundary("dirichlet", lambda x, t: x[:, 0])
    u = solve(ProblemSpec("linear_homogeneous", lc_of(g), pts[..., 0], g, bc))
    return estimate_hoelder(u, ((0.5, 0.5), 0.5), [0.2, 0.1, 0.05, 0.025]).constants["alpha"]


def test_criterion_08_hoelder():
    smooth = _hoelder(64, LinearCoefficients.heat)
    rough = [_hoelder(N, lambda g: LinearCoefficients.isotropic(checkerboard_field(g, 100, 1.0))) for N in (64, 128)]
    ok = smooth >= 0.9 and all(0 < a < 1 for a in rough) and abs(rough[1] - rough[0]) <= 0.05
    record(8, ok, f"smooth alpha={smooth:.3f}; checkerboard 100 alpha={rough[0]:.4f} (64^2), {rough[1]:.4f} (128^2)")
    assert ok


def test_criterion_09_limit_behavior():
    N = 1024
    g = make_grid(1, [(-2, 2)], 4 / N, 0.25, 1 / 4096)
    k = estimate_kernel(LinearCoefficients.heat(g), g, (2 / N,), tail_tol=None)
    cert = certify_limit_behavior(k.as_solution(), 1.0, center=(2 / N,))
    M, C2 = cert.constants["M"], cert.constants["C2"]
    ok = abs(M - math.erf(0.5)) <= 1e-3 and cert.passed and 0.2 <= C2 <= 0.35
    record(9, ok, f"M={M:.6f} vs erf(1/2)={math.erf(0.5):.6f}; C1={cert.constants['C1']:.4f} C2={C2:.4f}; bound holds={cert.passed}")
    assert ok


def test_criterion_10_caccioppoli():
    g, x, spec = _sine_heat(64, 1 / 256)
    u = solve(spec)
    eta = Cutoff((0.5,), (0.4,), 0.05, 0.1)
    taus = sorted({round(t * 256) / 256 for t in np.linspace(0.025, 0.5, 20)})
    sf = linear_structure(spec.coefficients)
    heat = {b: check_caccioppoli(u, eta, b, 0.1, sf, taus) for b in (1, 2, 3)}
    nl_sf = bounded_nonlinear_structure(0.5)
    nl_spec = ProblemSpec("quasilinear", nl_sf, np.sin(np.pi * x), g, Boundary("dirichlet", 0.0))
    u_nl = solve(nl_spec)
    nonlinear = {b: check_caccioppoli(u_nl, eta, b, 0.1, nl_sf, taus) for b in (1, 2, 3)}
    rng = np.random.default_rng(0)
    noisy = SolutionField(g, u.values + 0.05 * rng.standard_normal(u.values.shape))
    control = check_caccioppoli(noisy, eta, 1, 0.0, sf, taus)
    n_tau = len(taus)
    ok = (
        n_tau == 20
        and all(c.passed for c in heat.values())
        and all(c.passed for c in nonlinear.values())
        and not control.passed
    )
    record(
        10,
        ok,
        f"{n_tau} tau samples; heat max ratio "
        + "/".join(f"{heat[b].constants['max_ratio']:.2f}" for b in (1, 2, 3))
        + "; nonlinear "
        + "/".join(f"{nonlinear[b].constants['max_ratio']:.2f}" for b in (1, 2, 3))
        + f"; noisy control ratio {control.constants['max_ratio']:.2f} (violates={not control.passed})",
    )
    assert ok


def test_criterion_11_elliptic_green(tmp_path):
    h = 1 / 12
    g = make_grid(3, [(-12.5 * h, 11.5 * h)] * 3, h, 16.0, 1 / 16)
    t0 = time.perf_counter()
    lap = elliptic_green(LinearCoefficients.heat(g), g, (0.0, 0.0, 0.0))
    elapsed = time.perf_counter() - t0
    gs = make_grid(3, [(-12.5 * h, 11.5 * h)] * 3, h, 100.0, 0.25)
    striped = elliptic_green(LinearCoefficients.isotropic(striped_field(gs, 4, 0.5)), gs, (0.0, 0.0, 0.0))
    rec = cli.ReportRecord("green", "striped-c4-p0.5", "", gs.hash, True, {"constants": {"K_fit": striped.K_fit}})
    bfile = cli.record_baseline([rec], tmp_path / "baseline.json")
    stored = json.loads(bfile.read_text())["entries"]["striped-c4-p0.5"]["constants"]["K_fit"]
    ok = lap.max_rel_error <= 0.05 and lap.K_fit <= 1.3 and math.isfinite(stored) and elapsed < 180
    record(
        11,
        ok,
        f"Laplacian max rel error {100 * lap.max_rel_error:.2f}%, K={lap.K_fit:.3f}, {elapsed:.1f}s; striped K={stored:.3f} (baseline)",
    )
    assert ok


def _widder_grid(N: int, dt: float):
    return make_grid(1, [(-4, 4)], 8 / N, 0.25, dt)


def test_criterion_12_widder_roundtrip():
    g = _widder_grid(128, 1 / 1024)
    lc = LinearCoefficients.heat(g)
    atoms = [((0.3,), 1.0), ((-1.1,), 0.5)]
    hats = hat_partition(g, 4 * g.h)
    cert = trace_roundtrip(BorelMeasure(atoms), lc, g, hats, seed=0)
    tv = [TraceValue(p.name, float(v), 0.0, (), ()) for p, v in zip(hats, cert.details["traces"])]
    found = recover_atoms(tv, hats)
    loc_err = max(abs(f[0][0] - w[0][0]) for f, w in zip(found, sorted(atoms)))
    mass_err = max(abs(f[1] - w[1]) / w[1] for f, w in zip(found, sorted(atoms)))
    atoms_ok = len(found) == 2 and loc_err <= g.h and mass_err <= 0.02

    x = g.axis_centers(0)
    dens = BorelMeasure(density=np.exp(-(x**2)), grid=g)
    gps = [gaussian_test((c,), 0.5) for c in (-1.0, 0.0, 0.7, 1.5)]
    dcert = trace_roundtrip(dens, lc, g, gps)
    rel = np.abs(dcert.details["traces"] - dcert.details["expected"]) / np.abs(dcert.details["expected"])
    dens_ok = bool(np.all(rel <= 0.02))

    # weak residual of the represented field under parabolic refinement (h/2, dt/4)
    g_fine = _widder_grid(256, 1 / 4096)
    bumps = random_bumps(g, 10, seed=0)

    def residual(grid):
        heat = LinearCoefficients.heat(grid)
        u = represent(estimate_kernel_family(heat, grid, _atom_sources(grid, atoms), 0.0), BorelMeasure(atoms))
        spec = ProblemSpec("linear_homogeneous", heat, np.zeros(grid.shape), grid, Boundary("no_flux"))
        return weak_residual(u, spec, bumps)

    r0, r1 = residual(g), residual(g_fine)
    order = math.log2(r0.max() / r1.max())
    resid_ok = r0.max() <= 5e-2 and order >= 1
    ok = atoms_ok and dens_ok and resid_ok and cert.passed and dcert.passed
    record(
        12,
        ok,
        f"atoms: location error {loc_err:.2e} (h={g.h}), mass error {100 * mass_err:.2f}%; "
        f"density traces max rel error {100 * rel.max():.1e}%; weak residual {r0.max():.1e} -> {r1.max():.1e} (order {order:.2f})",
    )
    assert ok


def _atom_sources(grid, atoms) -> np.ndarray:
    out = []
    for loc, _ in atoms:
        idx = grid.nearest_cell(loc)
        out.append([grid.axis_centers(d)[i] for d, i in enumerate(idx)])
    return np.array(out)


def _run_config(path: Path, out: Path) -> list[bytes]:
    cfg = cli.ExperimentConfig.from_file(path)
    records = cli.run(cfg, out, workers=1, reproducible=True)
    report = cli.write_reports(records, out)
    blobs = [report.read_bytes()]
    for rec in records:
        blobs += [(out / a).read_bytes() for a in rec.artifacts]
    return blobs


@pytest.mark.slow
def test_criterion_13_determinism(tmp_path):
    configs = sorted(CONFIGS.glob("*.json"))
    mismatched, failed = [], []
    for path in configs:
        a = _run_config(path, tmp_path / "a" / path.stem)
        b = _run_config(path, tmp_path / "b" / path.stem)
        if a != b:
            mismatched.append(path.stem)
        recs = cli.read_reports(tmp_path / "a" / path.stem)
        if not all(r.passed for r in recs):
            failed.append(path.stem)
    ok = len(configs) == 12 and not mismatched
    record(13, ok, f"{len(configs)} criterion configs rerun twice; non-identical: {mismatched or 'none'}; failing configs: {failed or 'none'}")
    assert ok
