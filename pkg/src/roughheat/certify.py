"""Empirical certificates for regularity statements about computed solutions.

Each certifier evaluates one inequality on a discrete solution and returns a
:class:`Certificate` carrying the smallest constant that makes it hold on the
sampled cells, the worst-case witness and the hashes of the inputs.
Essential suprema and infima are grid maxima and minima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .grid import (
    ContainmentError,
    Cylinder,
    SpaceTimeGrid,
    check_containment,
    materialize,
    parabolic_boundary,
    pseudo_distance_many,
)
from .solver import PreconditionError, SolutionField
from .structure import THETA_CAP, StructureBounds, StructureFunctions, bochner_norm

__all__ = [
    "Certificate",
    "Cutoff",
    "certify_max_principle",
    "certify_local_bound",
    "certify_harnack",
    "certify_pointwise_harnack",
    "estimate_hoelder",
    "certify_limit_behavior",
    "check_caccioppoli",
    "lattice_pairs",
    "ball_mass",
    "pseudo_ball",
]

DEFAULT_TOL = 1e-6


@dataclass
class Certificate:
    """Outcome of one certifier.

    ``passed`` is true iff the inequality holds on every checked sample with
    the reported ``constants``. ``applicable`` is false when a hypothesis of
    the statement fails on the data, in which case nothing is certified.
    """

    theorem: str
    passed: bool
    constants: dict
    witness: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    applicable: bool = True

    def as_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "passed": bool(self.passed),
            "applicable": bool(self.applicable),
            "constants": _plain(self.constants),
            "witness": _plain(self.witness),
            "provenance": _plain(self.provenance),
            "details": _plain(self.details),
        }


def _plain(obj):
    """Convert numpy scalars and arrays to JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _provenance(u: SolutionField) -> dict:
    return {
        "grid_hash": u.grid.hash,
        "problem_hash": u.metadata.get("problem_hash", ""),
        "config_hash": u.metadata.get("config_hash", ""),
    }


def _point(grid: SpaceTimeGrid, step: int, cell: tuple[int, ...]) -> dict:
    x = [float(grid.axis_centers(d)[i]) for d, i in enumerate(cell)]
    return {"x": x, "t": float(step * grid.dt)}


def _extreme(u: SolutionField, mask: np.ndarray, fn: str) -> tuple[float, dict]:
    """Max or min of ``u`` over a ``field_shape`` mask restricted to stored steps."""
    full = u.full()
    stored = np.zeros(u.grid.field_shape, dtype=bool)
    stored[u.steps] = True
    m = mask & stored
    if not np.any(m):
        raise PreconditionError("cell set has no stored samples")
    vals = np.where(m, full, -np.inf if fn == "max" else np.inf)
    flat = int(np.argmax(vals) if fn == "max" else np.argmin(vals))
    idx = np.unravel_index(flat, vals.shape)
    return float(vals[idx]), _point(u.grid, int(idx[0]), tuple(int(i) for i in idx[1:]))


# ---------------------------------------------------------------------------
# Maximum principle
# ---------------------------------------------------------------------------


def certify_max_principle(
    u: SolutionField,
    M: float,
    bounds: StructureBounds,
    mode: str = "max",
    tol: float = 1e-10,
) -> Certificate:
    """``u <= M + C k`` (``mode='max'``) or ``u >= M - C k`` (``mode='min'``) on ``Q``.

    ``k = (|b| + |d|) |M| + |f| + |g|`` from the bounds. With ``k = 0`` the
    certificate passes iff ``sup u <= M + tol``; otherwise it reports the
    empirical ``C = max(0, sup u - M) / k``.
    """
    if mode not in ("max", "min"):
        raise ValueError("mode must be 'max' or 'min'")
    sign = 1.0 if mode == "max" else -1.0
    gamma = parabolic_boundary(u.grid).mask
    gb, gw = _extreme(u, gamma, "max" if mode == "max" else "min")
    if sign * (gb - M) > tol:
        raise PreconditionError(f"u {'<=' if mode == 'max' else '>='} M fails on the parabolic boundary: {gb} vs {M}")
    everything = np.ones(u.grid.field_shape, dtype=bool)
    ext, where = _extreme(u, everything, "max" if mode == "max" else "min")
    k = bounds.k_maximum(M)
    excess = max(0.0, sign * (ext - M))
    if k > 0:
        C = excess / k
        passed = True
    else:
        C = 0.0 if excess <= tol else math.inf
        passed = excess <= tol
    return Certificate(
        "max_principle" if mode == "max" else "min_principle",
        passed,
        {"M": M, "k": k, "C": C, "extreme": ext, "boundary_extreme": gb},
        {"extreme_at": where, "boundary_extreme_at": gw},
        _provenance(u),
        {"tol": tol},
    )


# ---------------------------------------------------------------------------
# Local boundedness and Harnack
# ---------------------------------------------------------------------------


def _theta(bounds: StructureBounds | None, theta: float | None) -> float:
    if theta is not None:
        return theta
    return bounds.theta if bounds is not None else THETA_CAP


def certify_local_bound(
    u: SolutionField,
    center: tuple,
    rho: float,
    bounds: StructureBounds | None = None,
    k: float | None = None,
    theta: float | None = None,
) -> Certificate:
    """``sup_{Q(rho)} |u| <= C (rho^{-(n+2)/2} ||u||_{2,2,3rho} + rho^theta k)``.

    ``k`` defaults to ``|f| + |g| + |h|`` from the bounds (zero without bounds).
    """
    grid = u.grid
    cyl = Cylinder(center, rho, "standard")
    check_containment(cyl.tripled(), grid)
    inner = materialize(cyl, grid)
    outer = materialize(cyl.tripled(), grid)
    k = (bounds.k_local() if bounds is not None else 0.0) if k is None else k
    th = _theta(bounds, theta)
    full = u.full()
    absu = np.abs(full)
    sup, where = _extreme(SolutionField(grid, absu, u.metadata), inner.mask, "max")
    norm = bochner_norm(full, 2, 2, cells=outer, grid=grid)
    denom = rho ** (-(grid.n + 2) / 2) * norm + rho**th * k
    C = sup / denom if denom > 0 else (0.0 if sup == 0 else math.inf)
    return Certificate(
        "local_bound",
        math.isfinite(C),
        {"C": C, "sup_abs_u": sup, "norm_2_2_3rho": norm, "k": k, "theta": th, "rho": rho},
        {"sup_at": where},
        _provenance(u),
        {"center": [list(cyl.center[0]), cyl.center[1]]},
    )


def certify_harnack(
    u: SolutionField,
    center: tuple,
    rho: float,
    bounds: StructureBounds | None = None,
    k: float = 0.0,
    theta: float | None = None,
    tol: float = 1e-12,
) -> Certificate:
    """``max_{Q*(rho)} u <= C min_{Q(rho)} (u + rho^theta k)`` for a non-negative ``u``."""
    grid = u.grid
    cyl = Cylinder(center, rho, "standard")
    check_containment(cyl.tripled(), grid)
    full = u.full()
    stored = np.zeros(grid.field_shape, dtype=bool)
    stored[u.steps] = True
    big = materialize(cyl.tripled(), grid).mask & stored
    scale = max(1.0, float(np.max(np.abs(full[big])))) if np.any(big) else 1.0
    if np.any(full[big] < -tol * scale):
        raise PreconditionError("u is negative on Q(3 rho) beyond tolerance")
    th = _theta(bounds, theta)
    upper, w_up = _extreme(u, materialize(Cylinder(center, rho, "harnack_shifted"), grid).mask, "max")
    shifted = SolutionField(grid, full + rho**th * k, u.metadata)
    lower, w_lo = _extreme(shifted, materialize(cyl, grid).mask, "min")
    passed = lower > 0
    C = upper / lower if passed else math.inf
    return Certificate(
        "harnack",
        passed,
        {"C": C, "max_shifted": upper, "min_current": lower, "k": k, "theta": th, "rho": rho},
        {"max_at": w_up, "min_at": w_lo},
        _provenance(u),
    )


def lattice_pairs(points: np.ndarray, times: Sequence[float]) -> list[tuple[tuple, tuple]]:
    """All ordered pairs ``((x, t), (y, s))`` with ``s < t`` over a point and time lattice."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    times = sorted(float(t) for t in times)
    out = []
    for i, t in enumerate(times):
        for s in times[:i]:
            for x in points:
                for y in points:
                    out.append(((tuple(x), t), (tuple(y), s)))
    return out


def certify_pointwise_harnack(
    u: SolutionField,
    pairs: Sequence[tuple[tuple, tuple]],
    k: float = 0.0,
) -> Certificate:
    """Smallest ``C`` with ``u(y,s) + k <= (u(x,t) + k) exp C(|x-y|^2/(t-s) + t/s)``.

    Points are evaluated at the cell containing them and the step at their
    time. ``C`` is clamped below at zero.
    """
    grid = u.grid
    m = len(pairs)
    if m == 0:
        raise PreconditionError("empty pair set")
    late = np.empty(m)
    early = np.empty(m)
    d2 = np.empty(m)
    tl = np.empty(m)
    te = np.empty(m)
    for i, ((x, t), (y, s)) in enumerate(pairs):
        if not 0 < s < t < grid.T + 1e-12:
            raise PreconditionError(f"pair {i} violates 0 < s < t < T: s={s}, t={t}")
        late[i] = u.value_at(np.atleast_1d(x), t)
        early[i] = u.value_at(np.atleast_1d(y), s)
        d2[i] = float(np.sum((np.atleast_1d(x) - np.atleast_1d(y)) ** 2))
        tl[i], te[i] = t, s
    if np.any(late + k <= 0) or np.any(early + k < 0):
        raise PreconditionError("u + k must be positive at the later points and non-negative at the earlier ones")
    best, arg = _kernels.harnack_exponent_max(early, late, d2, tl, te, k)
    C = max(0.0, best)
    (x, t), (y, s) = pairs[arg]
    return Certificate(
        "pointwise_harnack",
        True,
        {"C": C, "C_raw": best, "k": k, "n_pairs": m},
        {"late": {"x": list(np.atleast_1d(x)), "t": t}, "early": {"x": list(np.atleast_1d(y)), "t": s}},
        _provenance(u),
    )


# ---------------------------------------------------------------------------
# Hoelder continuity
# ---------------------------------------------------------------------------


def pseudo_ball(X: tuple, r: float) -> Cylinder:
    """``{Y : |Y - X| < r}`` is the cylinder of edge ``2 r`` ending at ``X``."""
    return Cylinder(X, 2 * r, "standard")


def _distance_to_boundary(grid: SpaceTimeGrid, X: tuple) -> float:
    x, t = X
    x = np.atleast_1d(np.asarray(x, dtype=float))
    space = float(np.min(np.minimum(x - grid.lower, grid.upper - x)))
    return min(space, math.sqrt(max(t, 0.0)) / 2)


def estimate_hoelder(
    u: SolutionField,
    X: tuple,
    radii: Sequence[float],
    k: float = 0.0,
    L: float | None = None,
    noise_floor: float = 1e-12,
) -> Certificate:
    """Oscillation decay over pseudo-distance balls centered at ``X``.

    ``osc(r)`` is max minus min of ``u`` over the ball of radius ``r``; the
    exponent is the least-squares slope of ``log osc`` against ``log r``.
    ``H`` is the smallest constant with ``|u(Y) - u(X)| <= H (L + k) (|Y-X| / R)^alpha``
    over every cell of the largest ball, where ``R`` is the pseudo-distance
    from ``X`` to the boundary of ``Q`` capped at 1.
    """
    grid = u.grid
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    if radii.size < 2:
        raise PreconditionError("need at least two radii")
    x, t = X
    x = tuple(float(v) for v in np.atleast_1d(x))
    X = (x, float(t))
    kX = grid.step_of(t)
    full = u.full()
    stored = np.zeros(grid.field_shape, dtype=bool)
    stored[u.steps] = True
    osc = []
    for r in radii:
        ball = pseudo_ball(X, r)
        try:
            check_containment(ball, grid)
        except ContainmentError as exc:
            raise ContainmentError(exc.face, f"ladder radius {r} escapes Q: {exc}") from None
        mask = materialize(ball, grid).mask & stored
        if not np.any(mask):
            raise PreconditionError(f"ball of radius {r} contains no samples")
        vals = full[mask]
        osc.append(float(vals.max() - vals.min()))
    osc = np.array(osc)
    resolved = osc > noise_floor
    lower_bound_only = not np.all(resolved)
    if np.sum(resolved) >= 2:
        alpha = float(np.polyfit(np.log(radii[resolved]), np.log(osc[resolved]), 1)[0])
    else:
        alpha = math.nan
    L = float(np.max(np.abs(full[stored]))) if L is None else L
    R = min(1.0, _distance_to_boundary(grid, X))
    uX = float(full[(kX,) + grid.nearest_cell(x)])
    mask = materialize(pseudo_ball(X, radii[0]), grid).mask & stored
    idx = np.nonzero(mask)
    ys = grid.center_points()[idx[1:]]
    ss = idx[0] * grid.dt
    dist = pseudo_distance_many(x, float(t), ys, ss)
    diff = np.abs(full[idx] - uX)
    keep = dist > 0
    H = math.nan
    if math.isfinite(alpha) and np.any(keep) and L + k > 0:
        H = float(np.max(diff[keep] / ((L + k) * (dist[keep] / R) ** alpha)))
    return Certificate(
        "hoelder",
        bool(math.isfinite(alpha) and alpha > 0 and math.isfinite(H)),
        {"alpha": alpha, "H": H, "L": L, "k": k, "R": R},
        {"X": {"x": list(x), "t": float(t)}},
        _provenance(u),
        {"radii": radii, "osc": osc, "alpha_is_lower_bound": lower_bound_only},
    )


# ---------------------------------------------------------------------------
# Limit behaviour
# ---------------------------------------------------------------------------


def _overlap_1d(lo_faces: np.ndarray, h: float, a: float, b: float) -> np.ndarray:
    """Length of ``[face, face + h] cap (a, b)`` for every cell."""
    return np.clip(np.minimum(lo_faces + h, b) - np.maximum(lo_faces, a), 0.0, None)


def _ball_weights(grid: SpaceTimeGrid, center: np.ndarray, radius: float, sub: int = 8) -> np.ndarray:
    """Volume of each cell inside the open ball ``|x - center| < radius``.

    Exact in one dimension; sub-cell point sampling otherwise.
    """
    if grid.n == 1:
        faces = grid.box[0][0] + grid.h * np.arange(grid.shape[0])
        return _overlap_1d(faces, grid.h, center[0] - radius, center[0] + radius)
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    w = np.zeros(grid.shape)
    pts = grid.center_points()
    for o in np.stack(np.meshgrid(*([offs] * grid.n), indexing="ij"), axis=-1).reshape(-1, grid.n):
        inside = np.sum((pts + o * grid.h - center) ** 2, axis=-1) < radius**2
        w += inside
    return w * grid.cell_volume / sub**grid.n


def ball_mass(u: SolutionField, alpha: float, center: Sequence[float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``int_{|x - center|^2 < alpha t} u(x, t) dx`` at every stored step with ``t > 0``."""
    grid = u.grid
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    times, out = [], []
    for k in u.steps:
        t = k * grid.dt
        if t <= 0:
            continue
        w = _ball_weights(grid, c, math.sqrt(alpha * t))
        times.append(t)
        out.append(float(np.sum(w * u.at_step(k))))
    return np.array(times), np.array(out)


def _lower_hull(z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of the points ``(z_i, y_i)``."""
    order = np.lexsort((y, z))
    zs, ys = z[order], y[order]
    # keep the lowest y per distinct z
    first = np.ones(zs.size, dtype=bool)
    first[1:] = zs[1:] != zs[:-1]
    zs, ys = zs[first], ys[first]
    hz: list[float] = []
    hy: list[float] = []
    for zi, yi in zip(zs, ys):
        while len(hz) >= 2 and (hz[-1] - hz[-2]) * (yi - hy[-2]) - (hy[-1] - hy[-2]) * (zi - hz[-2]) <= 0:
            hz.pop()
            hy.pop()
        hz.append(float(zi))
        hy.append(float(yi))
    return np.array(hz), np.array(hy)


def _lower_envelope(z: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """``(log C1, C2)`` maximizing ``sum(log C1 - C2 z)`` subject to ``log C1 - C2 z_i <= y_i``, ``C2 >= 0``.

    A line lies below every sample iff it lies below the lower convex hull, so
    only hull vertices enter the linear program.
    """
    m = z.size
    hz, hy = _lower_hull(z, y)
    A = np.stack([np.ones(hz.size), -hz], axis=1)
    res = linprog(
        c=[-m, float(np.sum(z))],
        A_ub=A,
        b_ub=hy,
        bounds=[(None, None), (0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"envelope fit failed: {res.message}")
    logC1, C2 = res.x
    # tighten so every sample holds exactly despite solver tolerances
    logC1 = min(logC1, float(np.min(y + C2 * z)))
    return float(logC1), float(C2)


def certify_limit_behavior(
    u: SolutionField,
    alpha: float,
    k: float = 0.0,
    center: Sequence[float] | None = None,
    exclude_steps: int = 5,
    z_cap: float = 16.0,
    fixed_C2: float | None = None,
) -> Certificate:
    """Mass floor over shrinking balls and the Gaussian lower envelope it implies.

    ``M = inf_t int_{|x|^2 < alpha t} u dx`` over stored steps after the
    exclusion window. If ``M > 0`` the pair ``(C1, C2)`` is the tightest lower
    envelope ``u + k >= C1 t^{-n/2} exp(-C2 |x|^2 / t)`` over the samples with
    ``|x|^2 / t <= z_cap`` (with ``C2`` pinned when ``fixed_C2`` is given).
    """
    grid = u.grid
    n = grid.n
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if np.any(u.values < -1e-12 * max(1.0, float(np.max(np.abs(u.values))))):
        raise PreconditionError("u must be non-negative")
    k_min = int(u.steps[0]) + exclude_steps
    keep = u.steps >= k_min
    sub = SolutionField(grid, u.values[keep], u.metadata, int(u.steps[keep][0]))
    times, masses = ball_mass(sub, alpha, c)
    i = int(np.argmin(masses))
    M = float(masses[i])
    cons = {"M": M, "alpha": alpha, "k": k, "exclude_steps": exclude_steps}
    if not M > 0:
        cons.update({"C1": math.nan, "C2": math.nan})
        return Certificate("limit_behavior", False, cons, {"inf_at_t": times[i]}, _provenance(u), applicable=False)
    r2 = np.sum((grid.center_points() - c) ** 2, axis=-1)
    tt = sub.times.reshape((-1,) + (1,) * n)
    z = np.broadcast_to(r2 / tt, sub.values.shape)
    vals = sub.values + k
    sel = (z <= z_cap) & (vals > 0)
    y = np.log(vals[sel]) + 0.5 * n * np.log(np.broadcast_to(tt, sub.values.shape)[sel])
    zs = z[sel]
    if fixed_C2 is None:
        logC1, C2 = _lower_envelope(zs, y)
    else:
        C2 = float(fixed_C2)
        logC1 = float(np.min(y + C2 * zs))
    slack = y - (logC1 - C2 * zs)
    return Certificate(
        "limit_behavior",
        bool(np.all(slack >= -1e-12)),
        {**cons, "C1": math.exp(logC1), "C2": C2, "n_samples": int(zs.size)},
        {"inf_at_t": float(times[i])},
        _provenance(u),
        {"mass_series_min": M, "mass_series_max": float(np.max(masses)), "z_cap": z_cap, "t": times, "mass": masses},
    )


# ---------------------------------------------------------------------------
# Energy (Caccioppoli-type) inequality
# ---------------------------------------------------------------------------


def _step_on(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``sin^2(pi s / 2)`` on ``[0, 1]`` clamped outside, and its derivative."""
    sc = np.clip(s, 0.0, 1.0)
    inside = (s > 0) & (s < 1)
    return np.sin(0.5 * math.pi * sc) ** 2, np.where(inside, 0.5 * math.pi * np.sin(math.pi * sc), 0.0)


@dataclass(frozen=True)
class Cutoff:
    """``eta(x, t) = prod_i cos^2(pi (x_i - c_i) / (2 r_i)) * ramp(t)``.

    The spatial factor vanishes outside ``|x_i - c_i| < r_i``; the ramp rises
    from 0 at ``t_on`` to 1 at ``t_on + t_ramp`` and stays at 1 afterwards, so
    ``eta`` vanishes near the parabolic boundary but not at ``t = T``.
    """

    center: tuple[float, ...]
    radii: tuple[float, ...]
    t_on: float
    t_ramp: float

    def _space(self, x: np.ndarray):
        s = (x - np.asarray(self.center)) / np.asarray(self.radii)
        inside = np.abs(s) < 1
        v = np.where(inside, np.cos(0.5 * math.pi * s) ** 2, 0.0)
        dv = np.where(inside, -0.5 * math.pi * np.sin(math.pi * s) / np.asarray(self.radii), 0.0)
        return v, dv

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        v, _ = self._space(x)
        tv, _ = _step_on(np.asarray((t - self.t_on) / self.t_ramp))
        return np.prod(v, axis=-1) * float(tv)

    def dt(self, x: np.ndarray, t: float) -> np.ndarray:
        v, _ = self._space(x)
        _, tdv = _step_on(np.asarray((t - self.t_on) / self.t_ramp))
        return np.prod(v, axis=-1) * float(tdv) / self.t_ramp

    def grad(self, x: np.ndarray, t: float) -> np.ndarray:
        v, dv = self._space(x)
        tv, _ = _step_on(np.asarray((t - self.t_on) / self.t_ramp))
        n = v.shape[-1]
        out = np.empty(v.shape)
        for i in range(n):
            others = np.prod(np.delete(v, i, axis=-1), axis=-1) if n > 1 else 1.0
            out[..., i] = dv[..., i] * others * float(tv)
        return out

    def check_support(self, grid: SpaceTimeGrid) -> None:
        for d in range(grid.n):
            if self.center[d] - self.radii[d] < grid.box[d][0] + grid.h or self.center[d] + self.radii[d] > grid.box[d][1] - grid.h:
                raise PreconditionError(f"cutoff reaches within one cell of the lateral boundary on axis {d}")
        if self.t_on <= 0:
            raise PreconditionError("cutoff must vanish near t = 0 (t_on > 0)")


def _safe_ratio(num: np.ndarray, den: float) -> np.ndarray:
    """``num / den`` with ``0 / 0 = 0``."""
    if den > 0:
        return num / den
    if np.any(num != 0):
        raise PreconditionError("kappa = 0 requires f, g and h to vanish")
    return np.zeros_like(num)


def check_caccioppoli(
    u: SolutionField,
    eta: Cutoff,
    beta: float,
    kappa: float,
    structure: StructureFunctions,
    tau_samples: Sequence[float],
    tol: float = DEFAULT_TOL,
    reading: str = "homogeneous",
) -> Certificate:
    """Energy inequality for ``ubar = max(0, u) + kappa`` tested with ``eta^2 ubar^beta``.

    For each ``tau`` the left side is

        1/(beta+1) int eta^2 {bracket}(tau) dx + a beta / 2 iint eta^2 ubar^{beta-1} |ubar_x|^2

    and the right side ``iint F_eta ubar^{beta+1} + 2/(beta+1) iint eta |eta_t| ubar^{beta+1}``
    with ``F_eta = F eta^2 + 2 G eta |eta_x| + H |eta_x|^2``,
    ``F = beta (b^2 + f^2/kappa^2) + d + g/kappa + c^2/a`` and ``H = 4 a_bar^2 / a``.
    The bracket is ``ubar^{beta+1} - (beta+1) kappa^beta ubar + beta kappa^{beta+1}``
    (``reading='homogeneous'``) or the variant
    ``ubar^{beta-1} - (b+1) kappa^beta ubar + beta kappa^{beta+1}`` (``reading='variant'``);
    both are always computed and reported. ``G`` is evaluated as ``e h / kappa``
    and as ``e + h / kappa`` and the larger value is used.
    Time integrals are right-endpoint sums over the steps in ``(0, tau]``; the
    gradient term lives on cell faces.
    """
    if reading not in ("homogeneous", "variant"):
        raise ValueError("reading must be 'homogeneous' or 'variant'")
    if beta < 1:
        raise PreconditionError("beta must be >= 1")
    if kappa < 0:
        raise PreconditionError("kappa must be non-negative")
    grid = u.grid
    eta.check_support(grid)
    n, h, dt, vol = grid.n, grid.h, grid.dt, grid.cell_volume
    a, a_bar = structure.a, structure.a_bar
    pts = grid.center_points().reshape(-1, n)
    H = 4 * a_bar**2 / a
    taus = sorted({grid.step_of(t) for t in tau_samples})
    if taus and taus[-1] > u.steps[-1]:
        raise PreconditionError("tau beyond the stored solution")
    if u.first_step != 0:
        raise PreconditionError("the solution must start at t = 0")

    def coeff(name, t):
        return structure.coefficient(name, pts, t)

    # face geometry for the gradient term
    idx = np.arange(grid.ncells).reshape(grid.shape)
    faces = []
    for d in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[d], hi[d] = slice(0, -1), slice(1, None)
        L, R = idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()
        faces.append((L, R, 0.5 * (pts[L] + pts[R])))

    lhs_grad = 0.0
    rhs_F = 0.0
    rhs_t = 0.0
    rhs_F_alt = 0.0
    rows = []
    targets = set(taus)
    last = max(taus) if taus else 0
    for k in range(1, last + 1):
        t = k * dt
        ub = np.maximum(u.at_step(k).ravel(), 0.0) + kappa
        e_val = eta.value(pts, t)
        grad = eta.grad(pts, t)
        gnorm = np.linalg.norm(grad, axis=-1)
        b, c, d_, e, f, g, hh = (coeff(nm, t) for nm in ("b", "c", "d", "e", "f", "g", "h"))
        F = beta * (b**2 + _safe_ratio(f**2, kappa**2)) + d_ + _safe_ratio(g, kappa) + c**2 / a
        G_prod = e * _safe_ratio(hh, kappa)
        G_sum = e + _safe_ratio(hh, kappa)
        G_big = np.maximum(G_prod, G_sum)
        G_small = np.minimum(G_prod, G_sum)
        pw = ub ** (beta + 1)
        base = F * e_val**2 + H * gnorm**2
        rhs_F += float(np.sum((base + 2 * G_big * e_val * gnorm) * pw)) * vol * dt
        rhs_F_alt += float(np.sum((base + 2 * G_small * e_val * gnorm) * pw)) * vol * dt
        rhs_t += 2.0 / (beta + 1) * float(np.sum(e_val * np.abs(eta.dt(pts, t)) * pw)) * vol * dt
        for L, R, fp in faces:
            ef = eta.value(fp, t)
            uf = 0.5 * (ub[L] + ub[R])
            du = (ub[R] - ub[L]) / h
            lhs_grad += a * beta / 2 * float(np.sum(ef**2 * uf ** (beta - 1) * du**2)) * vol * dt
        if k in targets:
            e2 = e_val**2
            hom = ub ** (beta + 1) - (beta + 1) * kappa**beta * ub + beta * kappa ** (beta + 1)
            var = ub ** (beta - 1) - (b + 1) * kappa**beta * ub + beta * kappa ** (beta + 1)
            lhs_hom = float(np.sum(e2 * hom)) * vol / (beta + 1) + lhs_grad
            lhs_var = float(np.sum(e2 * var)) * vol / (beta + 1) + lhs_grad
            rhs = rhs_F + rhs_t
            rows.append(
                {
                    "tau": t,
                    "lhs": lhs_hom if reading == "homogeneous" else lhs_var,
                    "rhs": rhs,
                    "lhs_homogeneous": lhs_hom,
                    "lhs_variant": lhs_var,
                    "rhs_smaller_G": rhs_F_alt + rhs_t,
                    "gradient_term": lhs_grad,
                }
            )
    tiny = 1e-300
    ok = [r["lhs"] <= r["rhs"] * (1 + tol) + tiny for r in rows]
    ok_hom = [r["lhs_homogeneous"] <= r["rhs"] * (1 + tol) + tiny for r in rows]
    ok_var = [r["lhs_variant"] <= r["rhs"] * (1 + tol) + tiny for r in rows]
    ratios = [r["lhs"] / r["rhs"] if r["rhs"] > 0 else (0.0 if r["lhs"] <= 0 else math.inf) for r in rows]
    worst = int(np.argmax(ratios)) if rows else 0
    return Certificate(
        "caccioppoli",
        bool(rows) and all(ok),
        {"beta": beta, "kappa": kappa, "H": H, "max_ratio": max(ratios) if rows else math.nan},
        {"tau": rows[worst]["tau"] if rows else math.nan},
        _provenance(u),
        {
            "reading": reading,
            "holds_homogeneous": all(ok_hom),
            "holds_variant": all(ok_var),
            "rows": rows,
            "tol": tol,
        },
    )
