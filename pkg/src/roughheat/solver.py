"""Conservative finite-volume solver for divergence-form parabolic equations.

Linear problems ``u_t = {A_ij u_{x_i} + A_j u + F_j}_{x_j} + B_j u_{x_j} + C u + G``
are discretized on cell centers. The diagonal of ``A`` enters through the
harmonic mean of the two adjacent cells at each face; off-diagonal entries
use a cross-stencil average. Time stepping is the weighted scheme

    (I - w dt L) u^{k+1} = (I + (1 - w) dt L) u^k + dt (w s^{k+1} + (1 - w) s^k)

with ``w = 1`` (backward Euler) by default. Quasilinear problems
``u_t = div A(x,t,u,u_x) + B(x,t,u,u_x)`` use backward Euler with a Picard
iteration that freezes the face diffusivity ``dA_d/dp_d`` and the remainder
of the flux at the previous iterate.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .grid import SpaceTimeGrid, parabolic_boundary
from .structure import (
    LinearCoefficients,
    NotParabolicError,
    StructureError,
    StructureFunctions,
    ellipticity_check,
    random_samples,
    verify_structure,
)

__all__ = [
    "SolverError",
    "PreconditionError",
    "Boundary",
    "ProblemSpec",
    "SolverConfig",
    "SolutionField",
    "Bump",
    "solve",
    "propagate",
    "weak_residual",
    "random_bumps",
    "mass_balance",
    "face_gradient",
]


class SolverError(RuntimeError):
    """Picard or linear-solver failure at a given step."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class PreconditionError(ValueError):
    """An operation was called outside its domain."""


# ---------------------------------------------------------------------------
# Problem description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Boundary:
    """Outer boundary condition.

    ``dirichlet`` imposes ``value`` (a number or ``f(x, t)`` with ``x`` of
    shape ``(m, n)``) on the physical boundary through a half-cell ghost flux.
    ``no_flux`` closes every boundary face. ``farfield`` imposes the Robin
    condition satisfied by ``|x - center|^{2-n}``, used for whole-space
    surrogates of the elliptic Green function.
    """

    kind: str = "no_flux"
    value: float | Callable = 0.0
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "no_flux", "farfield"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "farfield" and self.center is None:
            raise ValueError("farfield boundary needs a center")

    def data(self, x: np.ndarray, t: float) -> np.ndarray:
        if callable(self.value):
            return np.asarray(self.value(x, t), dtype=float).reshape(len(x))
        return np.full(len(x), float(self.value))

    def describe(self) -> dict:
        v = self.value if not callable(self.value) else getattr(self.value, "__name__", "callable")
        return {"kind": self.kind, "value": v, "center": self.center}


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    kind: str
    coefficients: LinearCoefficients | StructureFunctions
    initial: np.ndarray
    grid: SpaceTimeGrid
    boundary: Boundary = field(default_factory=Boundary)

    def __post_init__(self):
        if self.kind not in ("linear_full", "linear_homogeneous", "quasilinear"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        init = np.asarray(self.initial, dtype=float)
        if init.shape != self.grid.shape:
            raise ValueError(f"initial data shape {init.shape} != grid shape {self.grid.shape}")
        init.setflags(write=False)
        object.__setattr__(self, "initial", init)
        co = self.coefficients
        if self.kind == "quasilinear":
            if not isinstance(co, StructureFunctions):
                raise TypeError("quasilinear problems need StructureFunctions")
        else:
            if not isinstance(co, LinearCoefficients):
                raise TypeError("linear problems need LinearCoefficients")
            if co.grid.shape != self.grid.shape:
                raise ValueError("coefficient grid does not match problem grid")
            if self.kind == "linear_homogeneous" and not co.homogeneous:
                raise ValueError("homogeneous problems must have F_j = G = 0")

    @property
    def hash(self) -> str:
        m = hashlib.sha256()
        m.update(self.kind.encode())
        m.update(self.grid.hash.encode())
        m.update(repr(self.boundary.describe()).encode())
        m.update(np.ascontiguousarray(self.initial).tobytes())
        co = self.coefficients
        if isinstance(co, LinearCoefficients):
            for name in ("A", "A_vec", "B_vec", "F_vec", "C", "G"):
                arr = getattr(co, name)
                m.update(name.encode())
                if arr is not None:
                    m.update(np.ascontiguousarray(arr).tobytes())
        else:
            m.update(co.name.encode())
        return m.hexdigest()[:16]


@dataclass(frozen=True)
class SolverConfig:
    time_scheme_weight: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iters: int = 60
    linear_solver: str = "direct"
    linear_solver_tol: float = 1e-12
    linear_solver_max_iters: int = 2000

    def __post_init__(self):
        if not 0.5 <= self.time_scheme_weight <= 1.0:
            raise ValueError("time_scheme_weight must lie in [1/2, 1]")
        if self.picard_tol <= 0 or self.linear_solver_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")

    @property
    def hash(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SolutionField:
    """``u`` at steps ``0..nt`` (or a contiguous step range) on the grid."""

    grid: SpaceTimeGrid
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    first_step: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[1:] != self.grid.shape:
            raise ValueError("field shape does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("solution has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def steps(self) -> np.ndarray:
        return self.first_step + np.arange(self.values.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.grid.dt

    def at_step(self, k: int) -> np.ndarray:
        return self.values[k - self.first_step]

    def full(self) -> np.ndarray:
        """Values padded with zeros to the grid's ``(nt + 1, *shape)`` layout."""
        if self.first_step == 0 and self.values.shape[0] == self.grid.nt + 1:
            return self.values
        out = np.zeros(self.grid.field_shape)
        out[self.first_step : self.first_step + self.values.shape[0]] = self.values
        return out

    def value_at(self, x: Sequence[float], t: float) -> float:
        """Value of the cell containing ``x`` at the step time ``t``."""
        return float(self.at_step(self.grid.step_of(t))[self.grid.nearest_cell(x)])

    def __add__(self, other: "SolutionField") -> "SolutionField":
        return SolutionField(self.grid, self.values + other.values, {}, self.first_step)

    def scaled(self, lam: float) -> "SolutionField":
        return SolutionField(self.grid, lam * self.values, dict(self.metadata), self.first_step)


# ---------------------------------------------------------------------------
# Discrete operators
# ---------------------------------------------------------------------------


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s > 0, 2 * a * b / np.where(s > 0, s, 1.0), 0.0)
    return out


class _Assembler:
    """Sparse face/cell operators for one grid and boundary condition."""

    def __init__(self, grid: SpaceTimeGrid, boundary: Boundary):
        self.grid = grid
        self.boundary = boundary
        n, h = grid.n, grid.h
        N = grid.ncells
        idx = np.arange(N).reshape(grid.shape)
        self.left, self.right, self.D, self.Avg = [], [], [], []
        for d in range(n):
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[d] = slice(0, -1)
            hi[d] = slice(1, None)
            L = idx[tuple(lo)].ravel()
            R = idx[tuple(hi)].ravel()
            F = L.size
            rows = np.repeat(np.arange(F), 2)
            cols = np.stack([L, R], axis=1).ravel()
            self.left.append(L)
            self.right.append(R)
            self.D.append(sp.csr_matrix((np.tile([-1 / h, 1 / h], F), (rows, cols)), shape=(F, N)))
            self.Avg.append(sp.csr_matrix((np.full(2 * F, 0.5), (rows, cols)), shape=(F, N)))
        # cell-centred gradients, one-sided at the edges
        self.Cgrad = []
        for d in range(n):
            m = grid.shape[d]
            g1 = sp.lil_matrix((m, m))
            for i in range(m):
                if 0 < i < m - 1:
                    g1[i, i - 1], g1[i, i + 1] = -0.5 / h, 0.5 / h
                elif i == 0:
                    g1[i, 0], g1[i, 1] = -1 / h, 1 / h
                else:
                    g1[i, m - 2], g1[i, m - 1] = -1 / h, 1 / h
            mats = [sp.identity(grid.shape[e], format="csr") if e != d else g1.tocsr() for e in range(n)]
            op = mats[0]
            for mat in mats[1:]:
                op = sp.kron(op, mat, format="csr")
            self.Cgrad.append(op.tocsr())
        self.DT = [D.T.tocsr() for D in self.D]
        self.bfaces = self._boundary_faces()
        self.face_centers = [self._face_centers(d) for d in range(n)]

    def _face_centers(self, d: int) -> np.ndarray:
        pts = self.grid.center_points().reshape(-1, self.grid.n)
        return 0.5 * (pts[self.left[d]] + pts[self.right[d]])

    def _boundary_faces(self):
        """``(axis, sign, cell indices, face points)`` for every boundary face."""
        g = self.grid
        idx = np.arange(g.ncells).reshape(g.shape)
        pts = g.center_points()
        out = []
        for d in range(g.n):
            for sign, pos in ((-1, 0), (1, -1)):
                sl = [slice(None)] * g.n
                sl[d] = pos
                cells = idx[tuple(sl)].ravel()
                fp = pts[tuple(sl)].reshape(-1, g.n).copy()
                fp[:, d] += sign * g.h / 2
                out.append((d, sign, cells, fp))
        return out

    # -- linear ---------------------------------------------------------

    def linear(self, co: dict, t: float) -> tuple[sp.csr_matrix, np.ndarray]:
        """Operator ``L`` and source ``s`` at one time level."""
        g = self.grid
        n, N, h = g.n, g.ncells, g.h
        A = co["A"].reshape(N, n, n)
        L = sp.csr_matrix((N, N))
        s = np.zeros(N)
        Av = None if co["A_vec"] is None else co["A_vec"].reshape(N, n)
        Fv = None if co["F_vec"] is None else co["F_vec"].reshape(N, n)
        for d in range(n):
            lf, rf = self.left[d], self.right[d]
            flux = sp.diags(_harmonic(A[lf, d, d], A[rf, d, d])) @ self.D[d]
            for i in range(n):
                if i == d:
                    continue
                aid = 0.5 * (A[lf, i, d] + A[rf, i, d])
                if np.any(aid):
                    flux = flux + sp.diags(aid) @ self.Avg[d] @ self.Cgrad[i]
            if Av is not None:
                flux = flux + sp.diags(0.5 * (Av[lf, d] + Av[rf, d])) @ self.Avg[d]
            L = L - self.DT[d] @ flux
            if Fv is not None:
                s -= self.DT[d] @ (0.5 * (Fv[lf, d] + Fv[rf, d]))
        if co["B_vec"] is not None:
            Bv = co["B_vec"].reshape(N, n)
            for i in range(n):
                L = L + sp.diags(Bv[:, i]) @ self.Cgrad[i]
        if co["C"] is not None:
            L = L + sp.diags(co["C"].ravel())
        if co["G"] is not None:
            s += co["G"].ravel()
        Lb, sb = self._linear_boundary(A, Av, Fv, t)
        return (L + Lb).tocsr(), s + sb

    def _linear_boundary(self, A, Av, Fv, t):
        g = self.grid
        N, h = g.ncells, g.h
        diag = np.zeros(N)
        s = np.zeros(N)
        kind = self.boundary.kind
        if kind == "no_flux":
            return sp.csr_matrix((N, N)), s
        for d, sign, cells, fp in self.bfaces:
            a = A[cells, d, d]
            if kind == "dirichlet":
                gv = self.boundary.data(fp, t)
                np.add.at(diag, cells, -2 * a / h**2)
                np.add.at(s, cells, 2 * a * gv / h**2)
                if Av is not None:
                    np.add.at(s, cells, sign * Av[cells, d] * gv / h)
                if Fv is not None:
                    np.add.at(s, cells, sign * Fv[cells, d] / h)
            else:
                rv = fp - np.asarray(self.boundary.center)
                beta = sign * rv[:, d] / np.sum(rv**2, axis=1)
                np.add.at(diag, cells, -a * beta / h)
        return sp.diags(diag).tocsr(), s

    def linear_face_fluxes(self, co: dict, u: np.ndarray) -> list[np.ndarray]:
        """Interior face fluxes ``A_ij u_{x_i} + A_j u + F_j`` of a cell field."""
        g = self.grid
        n, N = g.n, g.ncells
        A = co["A"].reshape(N, n, n)
        Av = None if co["A_vec"] is None else co["A_vec"].reshape(N, n)
        Fv = None if co["F_vec"] is None else co["F_vec"].reshape(N, n)
        uf = u.ravel()
        out = []
        for d in range(n):
            lf, rf = self.left[d], self.right[d]
            fl = _harmonic(A[lf, d, d], A[rf, d, d]) * (self.D[d] @ uf)
            for i in range(n):
                if i != d:
                    fl += 0.5 * (A[lf, i, d] + A[rf, i, d]) * (self.Avg[d] @ (self.Cgrad[i] @ uf))
            if Av is not None:
                fl += 0.5 * (Av[lf, d] + Av[rf, d]) * (self.Avg[d] @ uf)
            if Fv is not None:
                fl += 0.5 * (Fv[lf, d] + Fv[rf, d])
            out.append(fl)
        return out

    def linear_source(self, co: dict, u: np.ndarray) -> np.ndarray:
        g = self.grid
        N, n = g.ncells, g.n
        uf = u.ravel()
        out = np.zeros(N)
        if co["B_vec"] is not None:
            Bv = co["B_vec"].reshape(N, n)
            for i in range(n):
                out += Bv[:, i] * (self.Cgrad[i] @ uf)
        if co["C"] is not None:
            out += co["C"].ravel() * uf
        if co["G"] is not None:
            out += co["G"].ravel()
        return out

    # -- quasilinear ----------------------------------------------------

    def face_state(self, u: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Face values and full gradients of ``u`` on the interior faces of axis ``d``."""
        uf = u.ravel()
        val = self.Avg[d] @ uf
        grad = np.empty((val.size, self.grid.n))
        for i in range(self.grid.n):
            grad[:, i] = self.D[d] @ uf if i == d else self.Avg[d] @ (self.Cgrad[i] @ uf)
        return val, grad

    def cell_gradient(self, u: np.ndarray) -> np.ndarray:
        uf = u.ravel()
        return np.stack([G @ uf for G in self.Cgrad], axis=-1)

    def _split_flux(self, sf: StructureFunctions, x, t, uval, p, d):
        """Diffusivity ``dA_d/dp_d`` and remainder ``A_d - k p_d`` at points ``x``."""
        delta = 1e-6 * (1.0 + np.abs(p[:, d]))
        pp = p.copy()
        pm = p.copy()
        pp[:, d] += delta
        pm[:, d] -= delta
        k = (sf.A(x, t, uval, pp)[:, d] - sf.A(x, t, uval, pm)[:, d]) / (2 * delta)
        rem = sf.A(x, t, uval, p)[:, d] - k * p[:, d]
        return k, rem

    def quasilinear_faces(self, sf: StructureFunctions, u: np.ndarray, t: float):
        """Frozen face diffusivities and remainders for every axis."""
        pts = self.grid.center_points().reshape(-1, self.grid.n)
        out = []
        for d in range(self.grid.n):
            val, grad = self.face_state(u, d)
            kl, rl = self._split_flux(sf, pts[self.left[d]], t, val, grad, d)
            kr, rr = self._split_flux(sf, pts[self.right[d]], t, val, grad, d)
            out.append((_harmonic(kl, kr), 0.5 * (rl + rr)))
        return out

    def quasilinear_face_fluxes(self, sf: StructureFunctions, u: np.ndarray, t: float) -> list[np.ndarray]:
        out = []
        for d, (k, rem) in enumerate(self.quasilinear_faces(sf, u, t)):
            out.append(k * (self.D[d] @ u.ravel()) + rem)
        return out

    def quasilinear_source(self, sf: StructureFunctions, u: np.ndarray, t: float) -> np.ndarray:
        pts = self.grid.center_points().reshape(-1, self.grid.n)
        return np.asarray(sf.B(pts, t, u.ravel(), self.cell_gradient(u)), dtype=float)

    def quasilinear_system(self, sf: StructureFunctions, ustar: np.ndarray, t: float):
        """Operator and explicit source with coefficients frozen at ``ustar``."""
        g = self.grid
        N, h = g.ncells, g.h
        L = sp.csr_matrix((N, N))
        s = np.zeros(N)
        for d, (k, rem) in enumerate(self.quasilinear_faces(sf, ustar, t)):
            L = L - self.DT[d] @ (sp.diags(k) @ self.D[d])
            s -= self.DT[d] @ rem
        s += self.quasilinear_source(sf, ustar, t)
        if self.boundary.kind == "dirichlet":
            pts = g.center_points().reshape(-1, g.n)
            diag = np.zeros(N)
            us = ustar.ravel()
            for d, sign, cells, fp in self.bfaces:
                gv = self.boundary.data(fp, t)
                p = np.zeros((cells.size, g.n))
                p[:, d] = sign * 2 * (gv - us[cells]) / h
                k, rem = self._split_flux(sf, pts[cells], t, 0.5 * (gv + us[cells]), p, d)
                # flux = k (sign * 2 (g - u_b)/h) + rem
                np.add.at(diag, cells, -2 * k / h**2)
                np.add.at(s, cells, 2 * k * gv / h**2 + sign * rem / h)
            L = L + sp.diags(diag)
        elif self.boundary.kind == "farfield":
            raise PreconditionError("farfield boundaries are supported for linear problems only")
        return L.tocsr(), s


def face_gradient(grid: SpaceTimeGrid, u: np.ndarray, axis: int) -> np.ndarray:
    """Differences ``(u_{i+1} - u_i) / h`` along ``axis``."""
    return np.diff(u, axis=axis) / grid.h


# ---------------------------------------------------------------------------
# Linear solves
# ---------------------------------------------------------------------------


class _StepSolver:
    """Solves ``M x = b`` for a fixed matrix; tridiagonal fast path in 1-D."""

    def __init__(self, M: sp.csr_matrix, cfg: SolverConfig, one_d: bool):
        self.cfg = cfg
        self.M = M
        self.bands = None
        self.lu = None
        if one_d:
            self.bands = (M.diagonal(-1).copy(), M.diagonal(0).copy(), M.diagonal(1).copy())
        elif cfg.linear_solver == "direct":
            self.lu = spla.splu(M.tocsc())
        else:
            self.ilu = spla.spilu(M.tocsc(), drop_tol=1e-5, fill_factor=10)
            self.prec = spla.LinearOperator(M.shape, self.ilu.solve)

    def __call__(self, b: np.ndarray, step: int) -> np.ndarray:
        if self.bands is not None:
            x = _kernels.tridiag_solve(*self.bands, b)
        elif self.lu is not None:
            x = self.lu.solve(b)
        else:
            cols = b.reshape(b.shape[0], -1)
            out = np.empty_like(cols)
            for j in range(cols.shape[1]):
                out[:, j], info = spla.bicgstab(
                    self.M,
                    cols[:, j],
                    rtol=self.cfg.linear_solver_tol,
                    atol=0.0,
                    maxiter=self.cfg.linear_solver_max_iters,
                    M=self.prec,
                )
                if info != 0:
                    raise SolverError(f"linear solver stagnated (info={info})", step)
            x = out.reshape(b.shape)
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solve produced non-finite values", step)
        return x


def _check_linear(co: LinearCoefficients) -> None:
    nu = ellipticity_check(co)
    if nu < co.nu * (1 - 1e-12):
        raise NotParabolicError(f"empirical ellipticity {nu} below declared nu={co.nu}")


def propagate(
    co: LinearCoefficients,
    grid: SpaceTimeGrid,
    u0: np.ndarray,
    boundary: Boundary = Boundary(),
    cfg: SolverConfig = SolverConfig(),
    first_step: int = 0,
    last_step: int | None = None,
    monitor: Callable[[int, np.ndarray], None] | None = None,
    assembler: _Assembler | None = None,
    store: bool = True,
) -> np.ndarray:
    """Step a linear problem from ``first_step`` to ``last_step``.

    ``u0`` has shape ``grid.shape`` or ``grid.shape + (m,)`` (``m`` independent
    initial data advanced together). Returns an array with the step axis first;
    with ``store=False`` only the final state is kept (step axis of length 1).
    """
    last_step = grid.nt if last_step is None else last_step
    asm = assembler or _Assembler(grid, boundary)
    w = cfg.time_scheme_weight
    N = grid.ncells
    u = np.asarray(u0, dtype=float).reshape(N, -1)
    multi = np.ndim(u0) == grid.n + 1
    out = np.empty(((last_step - first_step + 1) if store else 1,) + u.shape)
    out[0] = u
    if monitor is not None:
        monitor(first_step, u)
    dt = grid.dt
    eye = sp.identity(N, format="csr")
    static = not co.time_dependent and not (boundary.kind == "dirichlet" and callable(boundary.value))
    L_prev, s_prev = asm.linear(co.at_step(first_step), first_step * dt)
    solver = None
    for k in range(first_step, last_step):
        if static:
            L_next, s_next = L_prev, s_prev
        else:
            L_next, s_next = asm.linear(co.at_step(k + 1), (k + 1) * dt)
        if solver is None or not static:
            solver = _StepSolver((eye - w * dt * L_next).tocsr(), cfg, grid.n == 1)
        rhs = u + (1 - w) * dt * (L_prev @ u) + dt * (w * s_next + (1 - w) * s_prev)[:, None]
        u = solver(rhs, k + 1)
        out[k - first_step + 1 if store else 0] = u
        if monitor is not None:
            monitor(k + 1, u)
        L_prev, s_prev = L_next, s_next
    shape = (out.shape[0],) + grid.shape + ((u.shape[1],) if multi else ())
    return out.reshape(shape)


def _solve_quasilinear(spec: ProblemSpec, cfg: SolverConfig) -> np.ndarray:
    grid = spec.grid
    sf = spec.coefficients
    asm = _Assembler(grid, spec.boundary)
    N, dt = grid.ncells, grid.dt
    eye = sp.identity(N, format="csr")
    out = np.empty(grid.field_shape)
    out[0] = spec.initial
    u = spec.initial.ravel().copy()
    for k in range(grid.nt):
        t = (k + 1) * dt
        ustar = u.copy()
        prev_inc = math.inf
        for it in range(cfg.picard_max_iters):
            L, s = asm.quasilinear_system(sf, ustar.reshape(grid.shape), t)
            unew = _StepSolver((eye - dt * L).tocsr(), cfg, grid.n == 1)(u + dt * s, k + 1)
            inc = float(np.max(np.abs(unew - ustar)))
            if inc > prev_inc:
                unew = ustar + 0.5 * (unew - ustar)
            ustar = unew
            if inc < cfg.picard_tol * max(1.0, float(np.max(np.abs(unew)))):
                break
            prev_inc = inc
        else:
            raise SolverError(f"Picard iteration did not converge in {cfg.picard_max_iters} iterations", k + 1)
        u = ustar
        out[k + 1] = u.reshape(grid.shape)
    return out


def solve(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> SolutionField:
    """Finite-volume solution of a linear or quasilinear problem on ``spec.grid``."""
    grid = spec.grid
    if spec.kind == "quasilinear":
        if cfg.time_scheme_weight != 1.0:
            raise ValueError("quasilinear problems use backward Euler (weight 1)")
        report = verify_structure(spec.coefficients, random_samples(grid, 256, seed=0))
        if not report.ok:
            raise StructureError(f"structure conditions violated on the probe cloud: {report.worst_slack}")
        values = _solve_quasilinear(spec, cfg)
    else:
        _check_linear(spec.coefficients)
        values = propagate(spec.coefficients, grid, spec.initial, spec.boundary, cfg)
    meta = {"problem_hash": spec.hash, "config_hash": cfg.hash, "grid_hash": grid.hash}
    return SolutionField(grid, values, meta)


def mass_balance(u: SolutionField) -> np.ndarray:
    """``int_Omega u dx`` at every stored step (midpoint rule)."""
    axes = tuple(range(1, u.values.ndim))
    return u.values.sum(axis=axes) * u.grid.cell_volume


# ---------------------------------------------------------------------------
# Weak form residual
# ---------------------------------------------------------------------------


def _bump1(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inside = np.abs(s) < 1
    ss = np.where(inside, s, 0.0)
    val = np.where(inside, np.exp(-1.0 / (1.0 - ss**2)), 0.0)
    der = np.where(inside, val * (-2 * ss / (1 - ss**2) ** 2), 0.0)
    return val, der


@dataclass(frozen=True)
class Bump:
    """Smooth tensor bump with compact support ``|x_i - c_i| < r_i``, ``|t - t_c| < r_t``."""

    center: tuple[float, ...]
    radii: tuple[float, ...]
    t_center: float
    t_radius: float

    def _parts(self, x: np.ndarray, t: float):
        s = (x - np.asarray(self.center)) / np.asarray(self.radii)
        v, dv = _bump1(s)
        tv, tdv = _bump1(np.asarray((t - self.t_center) / self.t_radius))
        return v, dv, float(tv), float(tdv)

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        v, _, tv, _ = self._parts(x, t)
        return np.prod(v, axis=-1) * tv

    def dt(self, x: np.ndarray, t: float) -> np.ndarray:
        v, _, _, tdv = self._parts(x, t)
        return np.prod(v, axis=-1) * tdv / self.t_radius

    def grad(self, x: np.ndarray, t: float) -> np.ndarray:
        v, dv, tv, _ = self._parts(x, t)
        n = v.shape[-1]
        out = np.empty(v.shape)
        for i in range(n):
            others = np.prod(np.delete(v, i, axis=-1), axis=-1) if n > 1 else 1.0
            out[..., i] = dv[..., i] / self.radii[i] * others * tv
        return out

    def check_support(self, grid: SpaceTimeGrid) -> None:
        for d in range(grid.n):
            lo = self.center[d] - self.radii[d]
            hi = self.center[d] + self.radii[d]
            if lo < grid.box[d][0] + grid.h or hi > grid.box[d][1] - grid.h:
                raise PreconditionError(f"test function reaches within one cell of the boundary on axis {d}")
        if self.t_center - self.t_radius < 0 or self.t_center + self.t_radius > grid.T:
            raise PreconditionError("test function is not compactly supported in (0, T)")


def random_bumps(grid: SpaceTimeGrid, m: int, seed: int = 0, min_cells: int = 4) -> list[Bump]:
    """``m`` random bumps supported at least one cell away from the parabolic boundary."""
    rng = np.random.default_rng(seed)
    out = []
    lo, hi = grid.lower + grid.h, grid.upper - grid.h
    for _ in range(m):
        radii = []
        center = []
        for d in range(grid.n):
            width = hi[d] - lo[d]
            r = rng.uniform(max(min_cells * grid.h, 0.1 * width), 0.45 * width)
            radii.append(float(r))
            center.append(float(rng.uniform(lo[d] + r, hi[d] - r)))
        rt = rng.uniform(0.1 * grid.T, 0.45 * grid.T)
        tc = rng.uniform(rt, grid.T - rt)
        out.append(Bump(tuple(center), tuple(radii), float(tc), float(rt)))
    return out


def weak_residual(u: SolutionField, spec: ProblemSpec, test_functions: Sequence) -> np.ndarray:
    """Normalized residual of the weak formulation for each test function.

    For each ``phi`` the value is

        |iint (-u phi_t + phi_x . A - phi B)| / iint (|u phi_t| + |phi_x . A| + |phi B|)

    with the flux ``A`` taken on cell faces and the source ``B`` on cell
    centers, and step times as time nodes.
    """
    grid = spec.grid
    asm = _Assembler(grid, spec.boundary)
    pts = grid.center_points().reshape(-1, grid.n)
    fpts = asm.face_centers
    for phi in test_functions:
        if hasattr(phi, "check_support"):
            phi.check_support(grid)
    vol = grid.cell_volume
    num = np.zeros(len(test_functions))
    den = np.zeros(len(test_functions))
    co = spec.coefficients
    linear = isinstance(co, LinearCoefficients)
    for k in u.steps:
        if k == 0:
            continue
        t = k * grid.dt
        uk = u.at_step(k)
        if linear:
            cok = co.at_step(k)
            fluxes = asm.linear_face_fluxes(cok, uk)
            src = asm.linear_source(cok, uk)
        else:
            fluxes = asm.quasilinear_face_fluxes(co, uk, t)
            src = asm.quasilinear_source(co, uk, t)
        ur = uk.ravel()
        for j, phi in enumerate(test_functions):
            a = -ur * phi.dt(pts, t)
            c = phi.value(pts, t) * src
            b_terms = [phi.grad(fpts[d], t)[:, d] * fluxes[d] for d in range(grid.n)]
            num[j] += (a.sum() - c.sum() + sum(b.sum() for b in b_terms)) * vol
            den[j] += (np.abs(a).sum() + np.abs(c).sum() + sum(np.abs(b).sum() for b in b_terms)) * vol
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.abs(num) / np.where(den > 0, den, 1.0)
    return out


def boundary_values(u: SolutionField) -> np.ndarray:
    """Values of ``u`` on the parabolic boundary cells."""
    return u.full()[parabolic_boundary(u.grid).mask]
