"""Space-time grids, cylinders and the parabolic pseudo-distance.

Fields live on a uniform tensor grid of cells over a box and on the step
times ``t_k = k * dt`` for ``k = 0..nt``. A cylinder contains a (cell, step)
pair when the cell center and the step time lie in it; time intervals are
half-open ``(lo, hi]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "GridError",
    "ContainmentError",
    "SpaceTimeGrid",
    "Cylinder",
    "CellSet",
    "make_grid",
    "materialize",
    "pseudo_distance",
    "pseudo_distance_many",
    "parabolic_boundary",
    "CYLINDER_KINDS",
]

CYLINDER_KINDS = ("standard", "harnack_shifted", "tripled")

_REL_EPS = 1e-9


class GridError(ValueError):
    """Invalid grid descriptor."""


class ContainmentError(ValueError):
    """A cylinder leaves the space-time box ``Q``."""

    def __init__(self, face: str, message: str):
        super().__init__(f"{face}: {message}")
        self.face = face


@dataclass(frozen=True)
class SpaceTimeGrid:
    n: int
    box: tuple[tuple[float, float], ...]
    h: float
    T: float
    dt: float
    nt: int
    shape: tuple[int, ...]

    @property
    def ncells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.box])

    @property
    def omega_volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def field_shape(self) -> tuple[int, ...]:
        return (self.nt + 1,) + self.shape

    def axis_centers(self, axis: int) -> np.ndarray:
        lo = self.box[axis][0]
        return lo + (np.arange(self.shape[axis]) + 0.5) * self.h

    def centers(self) -> list[np.ndarray]:
        """Cell-center coordinate arrays, each broadcastable to ``shape``."""
        return np.meshgrid(*[self.axis_centers(d) for d in range(self.n)], indexing="ij", sparse=True)

    def center_points(self) -> np.ndarray:
        """Cell centers as an ``(*shape, n)`` array."""
        full = np.meshgrid(*[self.axis_centers(d) for d in range(self.n)], indexing="ij")
        return np.stack(full, axis=-1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    def step_of(self, t: float, tol: float = 1e-6) -> int:
        """Index of the step whose time equals ``t`` (within ``tol * dt``)."""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > tol * self.dt or not 0 <= k <= self.nt:
            raise GridError(f"time {t} is not a step time of the grid")
        return k

    def nearest_cell(self, x: Sequence[float]) -> tuple[int, ...]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.floor((x - self.lower) / self.h).astype(int)
        return tuple(int(i) for i in np.clip(idx, 0, np.array(self.shape) - 1))

    def cell_of_center(self, x: Sequence[float], tol: float = 1e-6) -> tuple[int, ...]:
        """Index of the cell whose center is ``x``; raises if ``x`` is not a center."""
        idx = self.nearest_cell(x)
        c = np.array([self.axis_centers(d)[i] for d, i in enumerate(idx)])
        if np.max(np.abs(c - np.atleast_1d(x))) > tol * self.h:
            raise GridError(f"point {tuple(np.atleast_1d(x))} is not a cell center")
        return idx

    def boundary_mask(self) -> np.ndarray:
        """Spatial mask of cells adjacent to the box boundary."""
        m = np.zeros(self.shape, dtype=bool)
        for d in range(self.n):
            sl = [slice(None)] * self.n
            sl[d] = 0
            m[tuple(sl)] = True
            sl[d] = -1
            m[tuple(sl)] = True
        return m

    def descriptor(self) -> dict:
        return {
            "n": self.n,
            "box": [list(b) for b in self.box],
            "h": self.h,
            "T": self.T,
            "dt": self.dt,
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.descriptor(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def refine(self, factor: int = 2, refine_time: bool = True) -> "SpaceTimeGrid":
        return make_grid(
            self.n, self.box, self.h / factor, self.T, self.dt / factor if refine_time else self.dt
        )


def make_grid(n: int, box, h: float, T: float, dt: float) -> SpaceTimeGrid:
    """Validate and build a uniform space-time grid.

    Args:
        n: spatial dimension, 1 to 3.
        box: ``[lo, hi]`` (applied to every axis) or one ``[lo, hi]`` per axis.
        h: cell width; every axis extent must be an integer multiple of it.
        T: final time.
        dt: time step; ``T / dt`` must be an integer.
    """
    if not 1 <= int(n) <= 3:
        raise GridError(f"dimension {n} outside 1..3")
    n = int(n)
    if not (h > 0 and dt > 0 and T > 0):
        raise GridError("h, dt and T must be positive")
    if dt > T:
        raise GridError(f"dt={dt} exceeds T={T}")
    b = np.asarray(box, dtype=float)
    if b.ndim == 1:
        b = np.tile(b, (n, 1))
    if b.shape != (n, 2):
        raise GridError(f"box must give [lo, hi] for each of {n} axes")
    shape = []
    for d, (lo, hi) in enumerate(b):
        if not hi > lo:
            raise GridError(f"axis {d}: degenerate extent [{lo}, {hi}]")
        m = (hi - lo) / h
        mi = int(round(m))
        if mi < 1 or abs(m - mi) > _REL_EPS * max(1.0, m):
            raise GridError(f"axis {d}: extent {hi - lo} is not a multiple of h={h}")
        shape.append(mi)
    ratio = T / dt
    nt = int(round(ratio))
    if abs(ratio - nt) > _REL_EPS * max(1.0, ratio):
        raise GridError(f"T={T} is not an integer multiple of dt={dt}")
    if int(np.prod(shape)) < 8:
        raise GridError(f"degenerate grid with {int(np.prod(shape))} cells (< 8)")
    return SpaceTimeGrid(
        n=n,
        box=tuple((float(lo), float(hi)) for lo, hi in b),
        h=float(h),
        T=float(T),
        dt=float(dt),
        nt=nt,
        shape=tuple(shape),
    )


@dataclass(frozen=True)
class Cylinder:
    """``R(rho) x (t' - rho^2, t']`` and its shifted/enlarged relatives.

    ``R(rho)`` is the open cube of edge length ``rho`` centered at ``x'``.
    """

    center: tuple[tuple[float, ...], float]
    rho: float
    kind: str = "standard"

    def __post_init__(self):
        if self.kind not in CYLINDER_KINDS:
            raise ValueError(f"unknown cylinder kind {self.kind!r}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        x, t = self.center
        object.__setattr__(self, "center", (tuple(float(v) for v in np.atleast_1d(x)), float(t)))

    @property
    def edge(self) -> float:
        return 3 * self.rho if self.kind == "tripled" else self.rho

    def time_interval(self) -> tuple[float, float]:
        t = self.center[1]
        r2 = self.rho**2
        if self.kind == "standard":
            return t - r2, t
        if self.kind == "harnack_shifted":
            return t - 8 * r2, t - 7 * r2
        return t - 9 * r2, t

    def spatial_bounds(self) -> np.ndarray:
        x = np.array(self.center[0])
        half = self.edge / 2
        return np.stack([x - half, x + half], axis=-1)

    def tripled(self) -> "Cylinder":
        return Cylinder(self.center, self.rho, "tripled")


@dataclass(frozen=True, eq=False)
class CellSet:
    """Membership mask over the ``(nt + 1, *shape)`` space-time cells."""

    grid: SpaceTimeGrid
    mask: np.ndarray
    slices: tuple[slice, ...] | None = field(default=None)

    def __post_init__(self):
        if self.mask.shape != self.grid.field_shape:
            raise ValueError(f"mask shape {self.mask.shape} != grid field shape {self.grid.field_shape}")
        self.mask.setflags(write=False)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def steps(self) -> np.ndarray:
        return np.nonzero(self.mask.reshape(self.mask.shape[0], -1).any(axis=1))[0]

    def values(self, field_values: np.ndarray) -> np.ndarray:
        return field_values[self.mask]

    def __or__(self, other: "CellSet") -> "CellSet":
        return CellSet(self.grid, self.mask | other.mask)

    def __and__(self, other: "CellSet") -> "CellSet":
        return CellSet(self.grid, self.mask & other.mask)

    def __invert__(self) -> "CellSet":
        return CellSet(self.grid, ~self.mask)


def check_containment(cyl: Cylinder, grid: SpaceTimeGrid) -> None:
    """Raise :class:`ContainmentError` unless ``cyl`` lies inside ``Q``."""
    eps = _REL_EPS * max(grid.h, 1.0)
    for d, (lo, hi) in enumerate(cyl.spatial_bounds()):
        if lo < grid.box[d][0] - eps:
            raise ContainmentError(f"x{d}_low", f"{cyl.kind} cylinder reaches {lo} < {grid.box[d][0]}")
        if hi > grid.box[d][1] + eps:
            raise ContainmentError(f"x{d}_high", f"{cyl.kind} cylinder reaches {hi} > {grid.box[d][1]}")
    tlo, thi = cyl.time_interval()
    teps = _REL_EPS * max(grid.dt, 1.0)
    if tlo < -teps:
        raise ContainmentError("t_low", f"{cyl.kind} cylinder starts at t={tlo} < 0")
    if thi > grid.T + teps:
        raise ContainmentError("t_high", f"{cyl.kind} cylinder ends at t={thi} > T={grid.T}")


def cylinder_slices(cyl: Cylinder, grid: SpaceTimeGrid) -> tuple[slice, ...]:
    """Index slices ``(steps, axis0, axis1, ...)`` of the cells inside ``cyl``."""
    sl = []
    tlo, thi = cyl.time_interval()
    teps = _REL_EPS * grid.dt
    k0 = math.floor((tlo + teps) / grid.dt) + 1  # first k with k dt > tlo
    k1 = math.floor((thi + teps) / grid.dt)  # last k with k dt <= thi
    k0, k1 = max(k0, 0), min(k1, grid.nt)
    sl.append(slice(k0, max(k1 + 1, k0)))
    xeps = _REL_EPS * grid.h
    for d, (lo, hi) in enumerate(cyl.spatial_bounds()):
        # centers c_i = lo_d + (i + 1/2) h strictly inside (lo, hi)
        base = grid.box[d][0]
        i0 = math.floor((lo - base) / grid.h - 0.5 + xeps / grid.h) + 1
        i1 = math.ceil((hi - base) / grid.h - 0.5 - xeps / grid.h) - 1
        i0, i1 = max(i0, 0), min(i1, grid.shape[d] - 1)
        sl.append(slice(i0, max(i1 + 1, i0)))
    return tuple(sl)


def materialize(cyl: Cylinder, grid: SpaceTimeGrid, check: bool = True) -> CellSet:
    """Cells of ``grid`` whose centers (and step times) lie in ``cyl``.

    For ``tripled`` cylinders the containment check applies to ``Q(3 rho)``.
    """
    if check:
        check_containment(cyl, grid)
    sl = cylinder_slices(cyl, grid)
    mask = np.zeros(grid.field_shape, dtype=bool)
    mask[sl] = True
    return CellSet(grid, mask, sl)


def pseudo_distance(X, Y) -> float:
    """Parabolic pseudo-distance ``|Y - X|``.

    ``X`` and ``Y`` are ``(x, t)`` pairs. The value is ``inf`` when ``Y`` lies
    in the future of ``X``.
    """
    (x, t), (y, s) = X, Y
    dx = np.atleast_1d(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
    ds = float(s) - float(t)
    if ds > 0:
        return math.inf
    return math.sqrt(max(float(np.max(dx * dx)) if dx.size else 0.0, -ds / 4))


def pseudo_distance_many(x, t: float, ys: np.ndarray, ss: np.ndarray) -> np.ndarray:
    """Vectorized :func:`pseudo_distance` from ``(x, t)`` to points ``(ys[i], ss[i])``."""
    ys = np.asarray(ys, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    dx2 = np.max((ys - np.atleast_1d(x)) ** 2, axis=-1)
    ds = np.asarray(ss, dtype=float) - t
    out = np.sqrt(np.maximum(dx2, -ds / 4))
    out[ds > 0] = np.inf
    return out


def parabolic_boundary(grid: SpaceTimeGrid) -> CellSet:
    """Boundary-adjacent cells at every step plus every cell at step 0."""
    mask = np.zeros(grid.field_shape, dtype=bool)
    mask[:, grid.boundary_mask()] = True
    mask[0] = True
    return CellSet(grid, mask)
