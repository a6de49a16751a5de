"""Discrete fundamental solutions, Gaussian envelopes and the Green function.

The kernel ``Gamma(x, t; xi, tau)`` of a homogeneous linear problem is
estimated by propagating a unit-mass cell delta. The whole space is replaced
by a box with closed walls; a tail monitor records how much mass reaches the
boundary layer so that fitted regions are never contaminated by the walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import spsolve

from .grid import SpaceTimeGrid
from .solver import Boundary, PreconditionError, SolutionField, SolverConfig, _Assembler, propagate
from .structure import LinearCoefficients, ellipticity_check

__all__ = [
    "EnlargeBoxError",
    "FitError",
    "KernelEstimate",
    "KernelFamily",
    "GaussianFit",
    "GreenEstimate",
    "heat_kernel",
    "estimate_kernel",
    "estimate_kernel_family",
    "fit_gaussian_bounds",
    "check_chapman_kolmogorov",
    "check_chapman_kolmogorov_analytic",
    "elliptic_green",
    "newtonian_constant",
]

DEFAULT_TAIL_TOL = 1e-8
DEFAULT_MIN_STEPS = 10


class EnlargeBoxError(RuntimeError):
    """Kernel mass reached the walls before the requested horizon."""

    def __init__(self, message: str, suggested_half_width: float):
        super().__init__(f"{message}; suggested box half-width >= {suggested_half_width:.4g}")
        self.suggested_half_width = suggested_half_width


class FitError(ValueError):
    """A Gaussian envelope cannot be fitted on the requested region."""

    def __init__(self, message: str, cells: np.ndarray | None = None):
        super().__init__(message)
        self.cells = cells


def heat_kernel(alpha: float, n: int, x, t) -> np.ndarray:
    """``(4 pi alpha t)^{-n/2} exp(-|x|^2 / (4 alpha t))``.

    For ``n = 1`` ``x`` is an array of coordinates; for ``n > 1`` its last axis
    holds the ``n`` components.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0")
    if alpha <= 0:
        raise ValueError("heat kernel needs alpha > 0")
    x = np.asarray(x, dtype=float)
    r2 = x**2 if n == 1 else np.sum(x**2, axis=-1)
    return (4 * math.pi * alpha * t) ** (-n / 2) * np.exp(-r2 / (4 * alpha * t))


def newtonian_constant(n: int) -> float:
    """Constant ``c_n`` with ``-Laplace(c_n |x|^{2-n}) = delta`` (``n >= 3``)."""
    area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    return 1.0 / ((n - 2) * area)


# ---------------------------------------------------------------------------
# Kernel estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelEstimate:
    """Sampled ``Gamma(., t_k; xi, tau)`` for steps ``first_step .. last``.

    ``values[j]`` is the field at step ``first_step + j``; ``first_step`` is the
    step of ``tau`` plus one. ``tail_mass[j]`` is the mass in the boundary
    layer and ``flagged[j]`` marks steps where it exceeds the tail tolerance.
    """

    grid: SpaceTimeGrid
    source: tuple[float, ...]
    tau: float
    values: np.ndarray
    first_step: int
    tail_mass: np.ndarray
    flagged: np.ndarray
    tail_tol: float
    metadata: dict = field(default_factory=dict)

    @property
    def steps(self) -> np.ndarray:
        return self.first_step + np.arange(self.values.shape[0])

    @property
    def elapsed(self) -> np.ndarray:
        """``t - tau`` for every stored step."""
        return self.steps * self.grid.dt - self.tau

    def at_step(self, k: int) -> np.ndarray:
        return self.values[k - self.first_step]

    def offsets(self) -> np.ndarray:
        """``x - xi`` at cell centers, shape ``(*shape, n)``."""
        return self.grid.center_points() - np.asarray(self.source)

    def mass(self) -> np.ndarray:
        axes = tuple(range(1, self.values.ndim))
        return self.values.sum(axis=axes) * self.grid.cell_volume

    def second_moment(self) -> np.ndarray:
        r2 = np.sum(self.offsets() ** 2, axis=-1)
        axes = tuple(range(1, self.values.ndim))
        return (self.values * r2).sum(axis=axes) * self.grid.cell_volume

    def as_solution(self) -> SolutionField:
        """The kernel as a solution field starting one step after ``tau``."""
        meta = {"source": list(self.source), "tau": self.tau, "grid_hash": self.grid.hash}
        return SolutionField(self.grid, self.values, meta, self.first_step)


@dataclass(frozen=True, eq=False)
class KernelFamily:
    """Kernels for several sources sharing one start time, stored column-wise."""

    grid: SpaceTimeGrid
    sources: np.ndarray
    tau: float
    values: np.ndarray  # (steps, *shape, m)
    first_step: int

    def kernel(self, j: int) -> np.ndarray:
        return self.values[..., j]

    def index_of(self, xi: Sequence[float], tol: float = 1e-9) -> int:
        d = np.max(np.abs(self.sources - np.asarray(xi)), axis=1)
        j = int(np.argmin(d))
        if d[j] > tol * max(1.0, self.grid.h):
            raise KeyError(f"no kernel for source {tuple(xi)}")
        return j


def _tau_step(grid: SpaceTimeGrid, tau: float) -> int:
    if not 0 <= tau < grid.T:
        raise PreconditionError(f"source time {tau} outside [0, T)")
    return grid.step_of(tau)


def _delta(grid: SpaceTimeGrid, xi: Sequence[float]) -> tuple[np.ndarray, tuple[int, ...]]:
    idx = grid.cell_of_center(xi)
    u0 = np.zeros(grid.shape)
    u0[idx] = 1.0 / grid.cell_volume
    return u0, idx


def _suggest_half_width(lc: LinearCoefficients, horizon: float, tail_tol: float, grid: SpaceTimeGrid) -> float:
    amax = float(np.max(np.linalg.norm(lc.A.reshape(-1, grid.n, grid.n), ord=2, axis=(1, 2))))
    return math.sqrt(4 * amax * horizon * math.log(1.0 / tail_tol)) + 2 * grid.h


def estimate_kernel(
    lc: LinearCoefficients,
    grid: SpaceTimeGrid,
    xi: Sequence[float],
    tau: float = 0.0,
    *,
    tail_tol: float | None = DEFAULT_TAIL_TOL,
    horizon: float | None = None,
    boundary: Boundary | None = None,
    cfg: SolverConfig = SolverConfig(),
) -> KernelEstimate:
    """Propagate a unit-mass delta at the cell centered at ``xi`` from ``tau``.

    The walls are closed unless ``boundary`` says otherwise. Steps whose
    boundary-layer mass exceeds ``tail_tol`` are flagged; if that happens at
    or before ``horizon`` (default ``T``) an :class:`EnlargeBoxError` is raised.
    ``tail_tol=None`` disables the monitor.
    """
    if not lc.homogeneous:
        raise PreconditionError("kernels are defined for the homogeneous equation (F = G = 0)")
    ellipticity_check(lc)
    k0 = _tau_step(grid, tau)
    u0, _ = _delta(grid, xi)
    boundary = boundary or Boundary("no_flux")
    vals = propagate(lc, grid, u0, boundary, cfg, first_step=k0)[1:]
    layer = grid.boundary_mask()
    tail = vals[:, layer].sum(axis=1) * grid.cell_volume
    flagged = tail > (tail_tol if tail_tol is not None else math.inf)
    est = KernelEstimate(
        grid,
        tuple(float(v) for v in xi),
        float(k0 * grid.dt),
        vals,
        k0 + 1,
        tail,
        flagged,
        math.nan if tail_tol is None else tail_tol,
        {"boundary": boundary.describe(), "grid_hash": grid.hash},
    )
    if tail_tol is not None and np.any(flagged):
        horizon = grid.T if horizon is None else horizon
        first_bad = float(est.steps[np.argmax(flagged)] * grid.dt)
        if first_bad <= horizon + 1e-12:
            raise EnlargeBoxError(
                f"boundary-layer mass exceeded {tail_tol:g} at t={first_bad:.6g}",
                _suggest_half_width(lc, horizon - est.tau, tail_tol, grid),
            )
    return est


def estimate_kernel_family(
    lc: LinearCoefficients,
    grid: SpaceTimeGrid,
    sources: np.ndarray | None = None,
    tau: float = 0.0,
    last_step: int | None = None,
    boundary: Boundary | None = None,
    cfg: SolverConfig = SolverConfig(),
) -> KernelFamily:
    """Kernels for many sources at once (all cell centers by default)."""
    if not lc.homogeneous:
        raise PreconditionError("kernels are defined for the homogeneous equation (F = G = 0)")
    k0 = _tau_step(grid, tau)
    pts = grid.center_points().reshape(-1, grid.n)
    if sources is None:
        sources = pts
        cols = np.arange(grid.ncells)
    else:
        sources = np.atleast_2d(np.asarray(sources, dtype=float))
        cols = np.array([np.ravel_multi_index(grid.cell_of_center(s), grid.shape) for s in sources])
    u0 = np.zeros((grid.ncells, len(cols)))
    u0[cols, np.arange(len(cols))] = 1.0 / grid.cell_volume
    u0 = u0.reshape(grid.shape + (len(cols),))
    vals = propagate(lc, grid, u0, boundary or Boundary("no_flux"), cfg, first_step=k0, last_step=last_step)
    return KernelFamily(grid, np.asarray(sources), float(k0 * grid.dt), vals[1:], k0 + 1)


# ---------------------------------------------------------------------------
# Gaussian envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianFit:
    """Two-sided envelope ``g_{alpha1} / C <= Gamma <= C g_{alpha2}`` on a region.

    ``C_upper`` and ``C_lower`` are the per-side constants; ``C_fit`` is their
    maximum (and at least 1). ``region`` is a boolean mask over the kernel's
    stored ``(step, cell)`` samples.
    """

    C_fit: float
    alpha1: float
    alpha2: float
    C_upper: float
    C_lower: float
    alpha_ref: float
    region: np.ndarray
    max_violation: float
    n_samples: int
    min_time: float

    def as_dict(self) -> dict:
        return {
            "C_fit": self.C_fit,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "C_upper": self.C_upper,
            "C_lower": self.C_lower,
            "alpha_ref": self.alpha_ref,
            "max_violation": self.max_violation,
            "n_samples": self.n_samples,
            "min_time": self.min_time,
        }

    def check(self, k: KernelEstimate, n: int | None = None) -> float:
        """Worst log-slack of both inequalities on the stored region (``<= 0`` means they hold)."""
        n = k.grid.n if n is None else n
        z, s, logG = _samples(k, self.region)
        up = logG - (_log_gauss(self.alpha2, n, z, s) + math.log(self.C_fit))
        lo = (_log_gauss(self.alpha1, n, z, s) - math.log(self.C_fit)) - logG
        return float(max(np.max(up), np.max(lo)))


def _log_gauss(alpha: float, n: int, z: np.ndarray, s: np.ndarray) -> np.ndarray:
    """``log g_alpha`` in terms of ``z = |x|^2 / s`` and ``s``."""
    return -0.5 * n * np.log(4 * math.pi * alpha * s) - z / (4 * alpha)


def _samples(k: KernelEstimate, region: np.ndarray):
    r2 = np.sum(k.offsets() ** 2, axis=-1)
    s = np.broadcast_to(k.elapsed.reshape((-1,) + (1,) * k.grid.n), k.values.shape)
    rr = np.broadcast_to(r2, k.values.shape)
    v = k.values[region]
    s = s[region]
    return rr[region] / s, s, np.log(v)


def default_region(
    k: KernelEstimate,
    alpha_ref: float,
    radius: float = 4.0,
    min_steps: int = DEFAULT_MIN_STEPS,
    min_time: float | None = None,
) -> np.ndarray:
    """Cells with ``|x - xi| <= radius sqrt(alpha_ref (t - tau))`` after the exclusion window."""
    r2 = np.sum(k.offsets() ** 2, axis=-1)
    s = k.elapsed
    t_min = max(min_steps * k.grid.dt, min_time or 0.0) - 1e-12
    ok_t = (s >= t_min) & ~k.flagged
    lim = radius**2 * alpha_ref * s
    mask = r2[None] <= lim.reshape((-1,) + (1,) * k.grid.n)
    return mask & ok_t.reshape((-1,) + (1,) * k.grid.n)


def pilot_alpha(k: KernelEstimate, min_steps: int = DEFAULT_MIN_STEPS) -> float:
    """Diffusivity from the second moment, ``int |x - xi|^2 Gamma = 2 n alpha t``."""
    s = k.elapsed
    use = (s >= min_steps * k.grid.dt - 1e-12) & ~k.flagged
    if not np.any(use):
        raise FitError("no unflagged steps after the exclusion window")
    ratio = k.second_moment()[use] / (2 * k.grid.n * s[use] * np.maximum(k.mass()[use], 1e-300))
    return float(np.median(ratio))


def fit_gaussian_bounds(
    k: KernelEstimate,
    region: np.ndarray | None = None,
    *,
    radius: float = 4.0,
    min_steps: int = DEFAULT_MIN_STEPS,
    min_time: float | None = None,
    alpha_ref: float | None = None,
) -> GaussianFit:
    """Tightest two-sided Gaussian envelope of a kernel estimate.

    The upper rate ``alpha2`` minimizes ``max log(Gamma / g_alpha)`` (a convex
    problem in ``1/alpha``); the lower rate ``alpha1`` minimizes
    ``max log(g_alpha / Gamma)`` by a bracketed scan. If the two rates cross,
    a common rate minimizing the larger side is used for both.
    """
    n = k.grid.n
    alpha_ref = pilot_alpha(k, min_steps) if alpha_ref is None else alpha_ref
    if region is None:
        region = default_region(k, alpha_ref, radius, min_steps, min_time)
    region = np.asarray(region, dtype=bool)
    if not np.any(region):
        raise FitError("empty fit region")
    bad = region & (k.values <= 0)
    if np.any(bad):
        raise FitError("kernel is not positive on the fit region", np.argwhere(bad))
    z, s, logG = _samples(k, region)

    def upper(la):
        return float(np.max(logG - _log_gauss(math.exp(la), n, z, s)))

    def lower(la):
        return float(np.max(_log_gauss(math.exp(la), n, z, s) - logG))

    c = math.log(alpha_ref)
    lo_b, hi_b = c - 4.0, c + 4.0
    a2 = _argmin_scan(upper, lo_b, hi_b)
    a1 = _argmin_scan(lower, lo_b, hi_b)
    if a1 > a2:
        a1 = a2 = _argmin_scan(lambda la: max(upper(la), lower(la)), lo_b, hi_b)
    cu, cl = math.exp(upper(a2)), math.exp(lower(a1))
    C = max(1.0, cu, cl)
    fit = GaussianFit(
        C, math.exp(a1), math.exp(a2), cu, cl, alpha_ref, region, 0.0, int(region.sum()),
        float(max(min_steps * k.grid.dt, min_time or 0.0)),
    )
    viol = fit.check(k)
    return GaussianFit(
        fit.C_fit, fit.alpha1, fit.alpha2, cu, cl, alpha_ref, region, max(0.0, viol), fit.n_samples, fit.min_time
    )


def _argmin_scan(fn, lo: float, hi: float, m: int = 161) -> float:
    """Global scan on ``[lo, hi]`` followed by a bounded local refinement."""
    grid = np.linspace(lo, hi, m)
    vals = np.array([fn(v) for v in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, m - 1)]
    res = minimize_scalar(fn, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    return float(res.x) if res.fun <= vals[i] else float(grid[i])


# ---------------------------------------------------------------------------
# Chapman-Kolmogorov
# ---------------------------------------------------------------------------


def check_chapman_kolmogorov(
    lc: LinearCoefficients,
    grid: SpaceTimeGrid,
    xi: Sequence[float],
    tau: float,
    eta: float,
    t: float,
    probe_radius: float = 3.0,
    boundary: Boundary | None = None,
) -> float:
    """Max relative gap between ``Gamma(x,t;xi,tau)`` and ``int Gamma(x,t;zeta,eta) Gamma(zeta,eta;xi,tau) dzeta``.

    ``eta`` and ``t`` are snapped to the nearest step. Probes are the cells
    within ``probe_radius`` standard deviations of ``xi``; the family over
    ``zeta`` is advanced as one multi-column solve.
    """
    if not tau < eta < t:
        raise PreconditionError(f"need tau < eta < t, got {tau}, {eta}, {t}")
    k_eta, k_t = int(round(eta / grid.dt)), int(round(t / grid.dt))
    if not grid.step_of(tau) < k_eta < k_t <= grid.nt:
        raise PreconditionError("eta and t must snap to distinct steps after tau")
    direct = estimate_kernel(lc, grid, xi, tau, tail_tol=None, boundary=boundary)
    lhs = direct.at_step(k_t)
    mid = direct.at_step(k_eta)
    support = mid.ravel() > 1e-14 * mid.max()
    pts = grid.center_points().reshape(-1, grid.n)[support]
    fam = estimate_kernel_family(lc, grid, pts, k_eta * grid.dt, last_step=k_t, boundary=boundary)
    right = fam.values[-1].reshape(grid.ncells, -1) @ (mid.ravel()[support] * grid.cell_volume)
    alpha = pilot_alpha(direct, min_steps=1)
    r2 = np.sum(direct.offsets() ** 2, axis=-1).ravel()
    probes = r2 <= probe_radius**2 * 2 * alpha * (t - tau)
    lr = lhs.ravel()[probes]
    return float(np.max(np.abs(lr - right[probes]) / lr))


def check_chapman_kolmogorov_analytic(
    alpha: float, n: int, xi, tau: float, eta: float, t: float, probes: np.ndarray, nodes: int = 4001
) -> float:
    """The same identity for the heat kernel, evaluated by trapezoidal quadrature.

    The Gaussian factorizes over coordinates, so the ``zeta`` integral is a
    product of one-dimensional quadratures.
    """
    if not tau < eta < t:
        raise PreconditionError(f"need tau < eta < t, got {tau}, {eta}, {t}")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    probes = np.asarray(probes, dtype=float).reshape(-1, n)
    width = 12 * math.sqrt(alpha * (t - tau))
    worst = 0.0
    for x in probes:
        lhs = 1.0
        rhs = 1.0
        for d in range(n):
            lo = min(x[d], xi[d]) - width
            hi = max(x[d], xi[d]) + width
            z = np.linspace(lo, hi, nodes)
            f = heat_kernel(alpha, 1, x[d] - z, t - eta) * heat_kernel(alpha, 1, z - xi[d], eta - tau)
            rhs *= float(np.trapezoid(f, z))
            lhs *= float(heat_kernel(alpha, 1, x[d] - xi[d], t - tau))
        worst = max(worst, abs(lhs - rhs) / lhs)
    return worst


# ---------------------------------------------------------------------------
# Elliptic Green function
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GreenEstimate:
    """Time-integrated kernel ``G(x) = int_0^inf Gamma(x, t; xi, 0) dt`` and its power-law fit.

    ``K_fit`` is the two-sided constant relative to the Newtonian profile
    ``c_n |x - xi|^{2-n}``; ``K_literal`` is the same constant against the bare
    ``|x - xi|^{2-n}``.
    """

    grid: SpaceTimeGrid
    source: tuple[float, ...]
    values: np.ndarray
    truncated: np.ndarray
    K_fit: float
    K_literal: float
    T_max: float
    tail_bound: float
    tail_estimate: float
    annulus: tuple[float, float]
    max_rel_error: float
    metadata: dict = field(default_factory=dict)

    def radial(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.linalg.norm(self.grid.center_points() - np.asarray(self.source), axis=-1)
        return r, self.values

    def as_dict(self) -> dict:
        return {
            "K_fit": self.K_fit,
            "K_literal": self.K_literal,
            "T_max": self.T_max,
            "tail_bound": self.tail_bound,
            "tail_estimate": self.tail_estimate,
            "annulus": list(self.annulus),
            "max_rel_error": self.max_rel_error,
        }


def _gaussian_tail(C: float, alpha: float, n: int, T: float) -> float:
    """``C int_T^inf (4 pi alpha t)^{-n/2} dt``, a bound for ``C int_T^inf g_alpha dt``."""
    return C * (4 * math.pi * alpha) ** (-n / 2) * T ** (1 - n / 2) / (n / 2 - 1)


def elliptic_green(
    lc: LinearCoefficients,
    grid: SpaceTimeGrid,
    xi: Sequence[float],
    T_max: float | None = None,
    *,
    upper: tuple[float, float] | None = None,
    annulus: tuple[float, float] | None = None,
    boundary: Boundary | None = None,
    cfg: SolverConfig = SolverConfig(),
    max_tail_fraction: float = 0.1,
) -> GreenEstimate:
    """Green function by integrating the kernel in time.

    The sum ``sum_k Gamma(x, t_k) dt`` runs to ``T_max`` (default ``T``). The
    discrete remainder after ``T_max`` is obtained from one extra stationary
    solve, since for backward Euler ``dt sum_{k > K} Gamma_k = (-L)^{-1} Gamma_K``.
    The whole-space remainder is bounded by ``C int_{T_max}^inf g_alpha dt``
    with ``(C, alpha) = upper`` (default ``(1, nu)``) and must stay below
    ``max_tail_fraction`` of ``G`` on the annulus. The outer boundary defaults
    to the far-field Robin condition matched to ``|x - xi|^{2-n}``.
    """
    n = grid.n
    if n < 3:
        raise PreconditionError("the Green-function bound is stated for n >= 3")
    if lc.time_dependent:
        raise PreconditionError("coefficients must be independent of t")
    if not lc.homogeneous:
        raise PreconditionError("kernels are defined for the homogeneous equation (F = G = 0)")
    if cfg.time_scheme_weight != 1.0:
        raise PreconditionError("the time integral uses backward Euler steps")
    ellipticity_check(lc)
    T_max = grid.T if T_max is None else T_max
    K = grid.step_of(T_max)
    xi = tuple(float(v) for v in xi)
    boundary = boundary or Boundary("farfield", center=xi)
    asm = _Assembler(grid, boundary)
    u0, _ = _delta(grid, xi)
    acc = np.zeros(grid.ncells)

    def monitor(k, u):
        if k > 0:
            acc[:] += u[:, 0] * grid.dt

    last = propagate(lc, grid, u0, boundary, cfg, last_step=K, monitor=monitor, assembler=asm, store=False)[0]
    L, _ = asm.linear(lc.at_step(0), 0.0)
    tail_field = spsolve((-L).tocsc(), last.reshape(-1))
    total = acc + tail_field

    lo, hi = annulus if annulus is not None else (4 * grid.h, 0.5 * _box_half(grid, xi))
    r = np.linalg.norm(grid.center_points().reshape(-1, n) - np.asarray(xi), axis=1)
    ring = (r >= lo - 1e-12) & (r <= hi + 1e-12)
    if not np.any(ring):
        raise PreconditionError(f"annulus [{lo}, {hi}] contains no cell centers")
    cn = newtonian_constant(n)
    prof = r[ring] ** (2 - n)
    G = total[ring]
    if np.any(G <= 0):
        raise FitError("Green function is not positive on the annulus")
    K_fit = float(max(np.max(G / (cn * prof)), np.max(cn * prof / G)))
    K_lit = float(max(np.max(G / prof), np.max(prof / G)))
    C_up, a_up = upper if upper is not None else (1.0, lc.nu)
    tail_bound = _gaussian_tail(C_up, a_up, n, T_max)
    if tail_bound > max_tail_fraction * float(np.min(G)):
        raise PreconditionError(
            f"T_max={T_max} too small: whole-space tail bound {tail_bound:.3g} exceeds "
            f"{max_tail_fraction:.0%} of min G on the annulus ({np.min(G):.3g})"
        )
    rel = float(np.max(np.abs(G / (cn * prof) - 1)))
    return GreenEstimate(
        grid,
        xi,
        total.reshape(grid.shape),
        acc.reshape(grid.shape),
        K_fit,
        K_lit,
        float(K * grid.dt),
        tail_bound,
        float(np.max(tail_field[ring] / G)),
        (float(lo), float(hi)),
        rel,
        {"boundary": boundary.describe(), "grid_hash": grid.hash},
    )


def _box_half(grid: SpaceTimeGrid, xi) -> float:
    return float(min(min(x - lo, hi - x) for x, (lo, hi) in zip(xi, grid.box)))
