"""Non-negative solutions represented by measures, and recovery of initial traces.

A non-negative measure ``rho`` with Gaussian growth generates the solution
``u(x, t) = int Gamma(x, t; xi, 0) rho(d xi)``; conversely the measure is the
weak limit of ``u(., t)`` as ``t -> 0``. Measures live on the computational box:
atoms are snapped to cell centers (mass preserved), densities are cell fields.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .certify import Certificate
from .grid import SpaceTimeGrid
from .kernel import KernelFamily, estimate_kernel_family
from .solver import Boundary, PreconditionError, ProblemSpec, SolutionField, random_bumps, weak_residual
from .structure import LinearCoefficients

__all__ = [
    "BorelMeasure",
    "TraceTestFunction",
    "GrowthReport",
    "TraceValue",
    "check_growth",
    "represent",
    "initial_trace",
    "trace_roundtrip",
    "recover_atoms",
    "gaussian_test",
    "hat_test",
    "hat_partition",
    "DEFAULT_LADDER",
]

# steps of the dyadic ladder t_j = t_0 / 2^j
DEFAULT_LADDER = (16, 8, 4, 2, 1)


@dataclass(frozen=True, eq=False)
class BorelMeasure:
    """Atoms ``[(location, mass), ...]`` plus an optional density on a grid.

    ``growth_family`` tags tail behaviour that no finite box can witness, e.g.
    ``{"family": "gaussian_growth", "gamma": 1.0}`` (density ~ exp(gamma |x|^2))
    or ``{"family": "exp_power", "power": 3.0}`` (density ~ exp(|x|^power)).
    """

    atoms: tuple = ()
    density: np.ndarray | None = None
    grid: SpaceTimeGrid | None = None
    growth_family: dict | None = None

    def __post_init__(self):
        atoms = tuple((tuple(float(v) for v in np.atleast_1d(loc)), float(mass)) for loc, mass in self.atoms)
        for _, mass in atoms:
            if not mass > 0:
                raise ValueError("atom masses must be positive")
        object.__setattr__(self, "atoms", atoms)
        if self.density is not None:
            if self.grid is None:
                raise ValueError("a density needs its grid")
            d = np.asarray(self.density, dtype=float)
            if d.shape != self.grid.shape:
                raise ValueError("density shape does not match grid")
            if np.any(d < 0) or not np.all(np.isfinite(d)):
                raise ValueError("density must be finite and non-negative")
            d.setflags(write=False)
            object.__setattr__(self, "density", d)

    @property
    def is_zero(self) -> bool:
        return not self.atoms and (self.density is None or not np.any(self.density))

    def total_mass(self) -> float:
        m = sum(mass for _, mass in self.atoms)
        if self.density is not None:
            m += float(self.density.sum()) * self.grid.cell_volume
        return m

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray], grid: SpaceTimeGrid | None = None) -> float:
        """``int fn d rho`` with atoms snapped to cell centers of ``grid`` (if given)."""
        total = 0.0
        for loc, mass in self.atoms:
            p = np.asarray(loc) if grid is None else _snap(grid, loc)
            total += mass * float(fn(p[None])[0])
        if self.density is not None:
            pts = self.grid.center_points().reshape(-1, self.grid.n)
            total += float(np.sum(fn(pts) * self.density.ravel())) * self.grid.cell_volume
        return total

    def __add__(self, other: "BorelMeasure") -> "BorelMeasure":
        if self.density is not None and other.density is not None:
            dens = self.density + other.density
        else:
            dens = self.density if self.density is not None else other.density
        grid = self.grid or other.grid
        return BorelMeasure(self.atoms + other.atoms, dens, grid, self.growth_family or other.growth_family)

    @property
    def hash(self) -> str:
        m = hashlib.sha256(repr((self.atoms, self.growth_family)).encode())
        if self.density is not None:
            m.update(np.ascontiguousarray(self.density).tobytes())
        return m.hexdigest()[:16]


def _snap(grid: SpaceTimeGrid, loc) -> np.ndarray:
    idx = grid.nearest_cell(loc)
    return np.array([grid.axis_centers(d)[i] for d, i in enumerate(idx)])


@dataclass(frozen=True)
class GrowthReport:
    ok: bool
    sigma: float
    reason: str


def check_growth(m: BorelMeasure, margin: float = 1e-3) -> GrowthReport:
    """Smallest workable ``sigma`` with ``int exp(-sigma |x|^2) rho(dx) < inf``.

    Atoms and box densities are integrable against every ``sigma > 0``
    (reported as ``sigma = 0``, meaning any positive value). The tag
    ``gaussian_growth`` with rate ``gamma`` needs ``sigma > gamma``;
    ``exp_power`` with power above 2 admits no ``sigma``.
    """
    tag = m.growth_family
    if not tag:
        return GrowthReport(True, 0.0, "finite measure on a bounded box: every sigma > 0 works")
    fam = tag.get("family")
    if fam == "gaussian_growth":
        gamma = float(tag["gamma"])
        return GrowthReport(True, gamma + margin * max(1.0, gamma), f"integrable exactly for sigma > {gamma}")
    if fam == "exp_power":
        power = float(tag["power"])
        if power > 2:
            return GrowthReport(False, math.inf, f"exp(|x|^{power}) grows faster than every Gaussian")
        if power == 2:
            return GrowthReport(True, 1.0 + margin, "integrable exactly for sigma > 1")
        return GrowthReport(True, 0.0, f"exp(|x|^{power}) is sub-Gaussian: every sigma > 0 works")
    raise ValueError(f"unknown growth family {fam!r}")


@dataclass(frozen=True, eq=False)
class TraceTestFunction:
    """Continuous ``psi`` with a certified bound ``|psi(x)| <= K exp(-delta |x|^2)``."""

    fn: Callable[[np.ndarray], np.ndarray]
    K: float
    delta: float
    name: str = "psi"
    center: tuple | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(x)), dtype=float)

    def check_decay(self, points: np.ndarray) -> None:
        pts = np.atleast_2d(points)
        # log space: the bound underflows long before psi does
        log_bound = math.log(self.K) - self.delta * np.sum(pts**2, axis=-1)
        with np.errstate(divide="ignore"):
            log_psi = np.log(np.abs(self(pts)))
        if np.any(log_psi > log_bound + 1e-12):
            raise PreconditionError(f"test function {self.name!r} violates its decay certificate")


def gaussian_test(center: Sequence[float], width: float, name: str | None = None) -> TraceTestFunction:
    """``exp(-|x - c|^2 / width^2)``; certificate from ``|x - c|^2 >= |x|^2 / 2 - |c|^2``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    w2 = width**2

    def fn(x):
        return np.exp(-np.sum((x - c) ** 2, axis=-1) / w2)

    return TraceTestFunction(fn, math.exp(float(c @ c) / w2), 1 / (2 * w2), name or f"gauss{tuple(c)}", tuple(c))


def hat_test(center: Sequence[float], half_width: float, delta: float = 1.0, name: str | None = None) -> TraceTestFunction:
    """Tensor product of 1-D hats ``max(0, 1 - |x_i - c_i| / w)``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def fn(x):
        return np.prod(np.clip(1 - np.abs(x - c) / half_width, 0.0, None), axis=-1)

    reach = float(np.sum((np.abs(c) + half_width) ** 2))
    return TraceTestFunction(fn, math.exp(delta * reach), delta, name or f"hat{tuple(c)}", tuple(c))


def hat_partition(grid: SpaceTimeGrid, spacing: float, margin: float | None = None) -> list[TraceTestFunction]:
    """Hats on a lattice of the given spacing; they sum to one away from the lattice edge."""
    margin = spacing if margin is None else margin
    axes = []
    for lo, hi in grid.box:
        axes.append(np.arange(lo + margin, hi - margin + 1e-12, spacing))
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.n)
    return [hat_test(c, spacing) for c in nodes]


# ---------------------------------------------------------------------------
# Representation and traces
# ---------------------------------------------------------------------------


def _weights(family: KernelFamily, m: BorelMeasure) -> np.ndarray:
    grid = family.grid
    w = np.zeros(len(family.sources))
    for loc, mass in m.atoms:
        try:
            j = family.index_of(_snap(grid, loc))
        except KeyError:
            raise PreconditionError(f"no kernel for the atom at {loc}") from None
        w[j] += mass
    if m.density is not None:
        if m.grid.shape != grid.shape:
            raise PreconditionError("density grid does not match the kernel grid")
        pts = grid.center_points().reshape(-1, grid.n)
        dens = m.density.ravel()
        for i in np.nonzero(dens)[0]:
            try:
                j = family.index_of(pts[i])
            except KeyError:
                raise PreconditionError(f"no kernel for the density cell at {pts[i]}") from None
            w[j] += dens[i] * grid.cell_volume
    return w


def represent(family: KernelFamily, m: BorelMeasure) -> SolutionField:
    """``u = sum_j w_j Gamma(., .; xi_j, tau)`` for the measure's atoms and density cells."""
    growth = check_growth(m)
    if not growth.ok:
        raise PreconditionError(f"growth condition fails: {growth.reason}")
    w = _weights(family, m)
    vals = family.values @ w
    meta = {"measure_hash": m.hash, "represented": True, "grid_hash": family.grid.hash}
    return SolutionField(family.grid, vals, meta, family.first_step)


@dataclass(frozen=True)
class TraceValue:
    name: str
    value: float
    error: float
    ladder: tuple
    samples: tuple


def _richardson(ts: np.ndarray, vals: np.ndarray, order: int = 2) -> tuple[float, float]:
    """Neville extrapolation of ``I(t)`` to ``t = 0`` removing terms up to ``t^order``.

    The error estimate is the larger change between the last two table
    columns and between the two finest entries of the final column.
    """
    idx = np.argsort(ts)[::-1]
    ts, vals = np.asarray(ts, dtype=float)[idx], np.asarray(vals, dtype=float)[idx]
    order = min(order, len(vals) - 2)
    table = [vals]
    for m in range(1, order + 1):
        prev = table[-1]
        col = (ts[:-m] * prev[1:] - ts[m:] * prev[:-1]) / (ts[:-m] - ts[m:])
        table.append(col)
    best = float(table[-1][-1])
    err = abs(best - float(table[-2][-1]))
    if len(table[-1]) >= 2:
        err = max(err, abs(best - float(table[-1][-2])))
    return best, err


def initial_trace(
    u: SolutionField,
    psis: Sequence[TraceTestFunction],
    ladder: Sequence[int] = DEFAULT_LADDER,
    sigma: float | None = None,
) -> list[TraceValue]:
    """Extrapolate ``int u(x, t) psi(x) dx`` to ``t = 0`` along a step ladder.

    ``ladder`` lists step offsets from the start of ``u`` (default ``t_0 / 2^j``
    with ``t_0 = 16 dt``). When ``sigma`` is known every ``psi`` must decay
    faster (``delta > sigma``).
    """
    grid = u.grid
    ladder = sorted({int(s) for s in ladder}, reverse=True)
    if len(ladder) < 3:
        raise PreconditionError("the extrapolation ladder needs at least 3 points")
    base = u.first_step - 1 if u.first_step > 0 else 0
    steps = [base + s for s in ladder]
    if steps[0] > u.steps[-1] or steps[-1] < u.first_step:
        raise PreconditionError("ladder steps are not stored in the solution")
    pts = grid.center_points().reshape(-1, grid.n)
    out = []
    for psi in psis:
        if sigma is not None and not psi.delta > sigma:
            raise PreconditionError(f"{psi.name}: decay rate {psi.delta} must exceed sigma={sigma}")
        psi.check_decay(pts)
        pv = psi(pts)
        ts = np.array([(k - base) * grid.dt for k in steps])
        vals = np.array([float(np.sum(u.at_step(k).ravel() * pv)) * grid.cell_volume for k in steps])
        value, err = _richardson(ts, vals)
        out.append(TraceValue(psi.name, value, err, tuple(float(t) for t in ts), tuple(float(v) for v in vals)))
    return out


def recover_atoms(
    traces: Sequence[TraceValue],
    psis: Sequence[TraceTestFunction],
    threshold: float = 1e-3,
) -> list[tuple[np.ndarray, float]]:
    """Atoms from traces against a hat partition.

    Hats that carry mass are grouped into connected clusters of lattice
    neighbours; each cluster yields ``mass = sum(trace)`` and
    ``location = sum(center * trace) / mass``, both exact for linear hats.
    """
    if any(p.center is None for p in psis):
        raise ValueError("atom recovery needs test functions with centers")
    centers = np.array([p.center for p in psis], dtype=float)
    vals = np.array([tv.value for tv in traces])
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    active = np.nonzero(vals > threshold * scale)[0]
    if active.size == 0:
        return []
    spacing = _lattice_spacing(centers)
    clusters: list[list[int]] = []
    seen = set()
    for i in active:
        if i in seen:
            continue
        stack, comp = [i], []
        seen.add(i)
        while stack:
            j = stack.pop()
            comp.append(j)
            near = active[np.max(np.abs(centers[active] - centers[j]), axis=1) <= spacing * 1.0001]
            for q in near:
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
        clusters.append(sorted(comp))
    atoms = []
    for comp in clusters:
        w = vals[comp]
        mass = float(w.sum())
        atoms.append((centers[comp].T @ w / mass, mass))
    atoms.sort(key=lambda a: tuple(a[0]))
    return atoms


def _lattice_spacing(centers: np.ndarray) -> float:
    c = np.unique(np.round(centers[:, 0], 12))
    return float(np.min(np.diff(c))) if c.size > 1 else 1.0


def trace_roundtrip(
    m: BorelMeasure,
    lc: LinearCoefficients,
    grid: SpaceTimeGrid,
    psis: Sequence[TraceTestFunction],
    *,
    ladder: Sequence[int] = DEFAULT_LADDER,
    rel_tol: float = 0.02,
    n_bumps: int = 10,
    seed: int = 0,
    residual_tol: float = 5e-2,
) -> Certificate:
    """Represent ``m``, recover its trace against ``psis`` and compare with ``int psi d m``.

    A value matches when it lies within its extrapolation error estimate or
    within ``rel_tol`` of the largest expected value. The represented field
    is also tested against the weak formulation with ``n_bumps`` random bumps.
    """
    growth = check_growth(m)
    if not growth.ok:
        raise PreconditionError(f"growth condition fails: {growth.reason}")
    pts = grid.center_points().reshape(-1, grid.n)
    need = np.zeros(grid.ncells, dtype=bool)
    for loc, _ in m.atoms:
        need[np.ravel_multi_index(grid.nearest_cell(loc), grid.shape)] = True
    if m.density is not None:
        need |= m.density.ravel() > 0
    if not np.any(need):
        need[0] = True  # zero measure: any single kernel gives the zero field
    family = estimate_kernel_family(lc, grid, pts[need], 0.0)
    u = represent(family, m)
    traces = initial_trace(u, psis, ladder, growth.sigma if m.growth_family else None)
    expected = np.array([m.integrate(psi, grid) for psi in psis])
    got = np.array([tv.value for tv in traces])
    errs = np.array([tv.error for tv in traces])
    scale = float(np.max(np.abs(expected))) if expected.size else 0.0
    gap = np.abs(got - expected)
    match = (gap <= errs) | (gap <= rel_tol * scale) | (gap <= 1e-14)
    spec = ProblemSpec("linear_homogeneous", lc, np.zeros(grid.shape), grid, Boundary("no_flux"))
    bumps = random_bumps(grid, n_bumps, seed)
    resid = weak_residual(u, spec, bumps) if not m.is_zero else np.zeros(n_bumps)
    resid_ok = bool(np.all(resid <= residual_tol))
    return Certificate(
        "widder_roundtrip",
        bool(np.all(match)) and resid_ok,
        {
            "max_abs_gap": float(np.max(gap)) if gap.size else 0.0,
            "max_rel_gap": float(np.max(gap) / scale) if scale > 0 else 0.0,
            "max_weak_residual": float(np.max(resid)) if resid.size else 0.0,
            "sigma": growth.sigma,
        },
        {"worst_psi": psis[int(np.argmax(gap))].name if gap.size else ""},
        {"grid_hash": grid.hash, "measure_hash": m.hash},
        {
            "traces": got,
            "expected": expected,
            "errors": errs,
            "weak_residuals": resid,
            "values_match": bool(np.all(match)),
        },
    )
