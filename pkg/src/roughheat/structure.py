"""Coefficient fields, mixed space-time norms and structure conditions.

The quasilinear equation ``u_t = div A(x,t,u,u_x) + B(x,t,u,u_x)`` is admissible
when, for non-negative coefficient fields ``b..h``,

    p . A >= a |p|^2 - b^2 u^2 - f^2
    |B|   <= c |p| + d |u| + g
    |A|   <= a_bar |p| + e |u| + h

and each coefficient lies in a space ``L^{p,q}`` with exponents obeying the
first-order (``b, c, e, f, h``) or zero-order (``d, g``) integrability rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .grid import CellSet, SpaceTimeGrid

__all__ = [
    "StructureError",
    "NotParabolicError",
    "CoefficientField",
    "ExponentPair",
    "ExponentCheck",
    "StructureBounds",
    "LinearCoefficients",
    "StructureFunctions",
    "StructureReport",
    "bochner_norm",
    "check_exponent_pair",
    "compute_theta",
    "verify_structure",
    "ellipticity_check",
    "sup_norm_over_S",
    "constant_field",
    "checkerboard_field",
    "striped_field",
    "random_piecewise_field",
    "named_field",
    "linear_structure",
    "bounded_nonlinear_structure",
    "register_structure",
    "structure_family",
    "random_samples",
    "COEFFICIENT_NAMES",
    "FIRST_ORDER",
    "ZERO_ORDER",
    "THETA_CAP",
]

COEFFICIENT_NAMES = ("b", "c", "d", "e", "f", "g", "h")
FIRST_ORDER = ("b", "c", "e", "f", "h")
ZERO_ORDER = ("d", "g")
THETA_CAP = 0.99


class StructureError(ValueError):
    """The structure conditions cannot be met."""


class NotParabolicError(ValueError):
    """The principal tensor is not uniformly positive definite."""


# ---------------------------------------------------------------------------
# Coefficient fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Scalar samples on ``Q``.

    ``values`` has the grid's spatial shape (time independent) or the full
    ``(nt + 1, *shape)`` field shape.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    name: str = "w"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape not in (self.grid.shape, self.grid.field_shape):
            raise ValueError(f"field {self.name!r}: shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"field {self.name!r} has non-finite values")
        if self.name in COEFFICIENT_NAMES and np.any(v < 0):
            raise ValueError(f"coefficient {self.name!r} must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_static(self) -> bool:
        return self.values.shape == self.grid.shape

    def at_step(self, k: int) -> np.ndarray:
        return self.values if self.is_static else self.values[k]

    def full(self) -> np.ndarray:
        """Read-only ``(nt + 1, *shape)`` view."""
        if self.is_static:
            return np.broadcast_to(self.values, self.grid.field_shape)
        return self.values

    def sample(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Piecewise-constant evaluation at points ``x`` (``(m, n)``) and times ``t``."""
        g = self.grid
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.floor((x - g.lower) / g.h).astype(int)
        idx = np.clip(idx, 0, np.array(g.shape) - 1)
        if self.is_static:
            return self.values[tuple(idx.T)]
        k = np.clip(np.ceil(np.asarray(t, dtype=float) / g.dt - 1e-9).astype(int), 0, g.nt)
        k = np.broadcast_to(k, idx.shape[:1])
        return self.values[(k,) + tuple(idx.T)]


def constant_field(grid: SpaceTimeGrid, value: float = 1.0, name: str = "w") -> CoefficientField:
    return CoefficientField(grid, np.full(grid.shape, float(value)), name)


def _tiles(grid: SpaceTimeGrid, period: float, axes=None) -> list[np.ndarray]:
    width = period / 2
    out = []
    for d, c in enumerate(grid.centers()):
        if axes is not None and d not in axes:
            continue
        out.append(np.floor((c - grid.box[d][0]) / width + 1e-9).astype(int))
    return out


def checkerboard_field(
    grid: SpaceTimeGrid, contrast: float, period: float, low: float = 1.0, name: str = "w"
) -> CoefficientField:
    """Tiles of width ``period / 2``; odd-parity tiles carry ``contrast * low``."""
    parity = sum(_tiles(grid, period)) % 2
    v = np.where(parity == 1, contrast * low, low) * np.ones(grid.shape)
    return CoefficientField(grid, v, name)


def striped_field(
    grid: SpaceTimeGrid, contrast: float, period: float, axis: int = 0, low: float = 1.0, name: str = "w"
) -> CoefficientField:
    """Stripes normal to ``axis`` of width ``period / 2`` alternating ``low`` and ``contrast * low``."""
    (t,) = _tiles(grid, period, axes=(axis,))
    v = np.where(t % 2 == 1, contrast * low, low) * np.ones(grid.shape)
    return CoefficientField(grid, v, name)


def random_piecewise_field(
    grid: SpaceTimeGrid, seed: int, contrast: float, period: float, low: float = 1.0, name: str = "w"
) -> CoefficientField:
    """Tiles of width ``period / 2`` with log-uniform values in ``[low, contrast * low]``."""
    tiles = _tiles(grid, period)
    ntile = [int(t.max()) + 1 for t in tiles]
    rng = np.random.default_rng(seed)
    table = low * np.exp(rng.uniform(0.0, math.log(contrast), size=ntile))
    v = table[tuple(np.broadcast_arrays(*tiles))]
    return CoefficientField(grid, v, name)


_NAMED_FIELDS = {
    "constant": lambda g, p, name: constant_field(g, p.get("value", 1.0), name),
    "checkerboard": lambda g, p, name: checkerboard_field(g, p["contrast"], p["period"], p.get("low", 1.0), name),
    "striped": lambda g, p, name: striped_field(
        g, p["contrast"], p["period"], p.get("axis", 0), p.get("low", 1.0), name
    ),
    "random_piecewise": lambda g, p, name: random_piecewise_field(
        g, p["seed"], p["contrast"], p["period"], p.get("low", 1.0), name
    ),
}


def named_field(grid: SpaceTimeGrid, spec: Mapping, name: str = "w") -> CoefficientField:
    """Build a built-in field from ``{"family": ..., **params}``."""
    family = spec["family"]
    if family not in _NAMED_FIELDS:
        raise KeyError(f"unknown field family {family!r}; known: {sorted(_NAMED_FIELDS)}")
    return _NAMED_FIELDS[family](grid, spec, name)


# ---------------------------------------------------------------------------
# Mixed norms
# ---------------------------------------------------------------------------


def _as_values(w, grid: SpaceTimeGrid | None) -> tuple[np.ndarray, SpaceTimeGrid]:
    if isinstance(w, CoefficientField):
        return w.full(), w.grid
    if hasattr(w, "values") and hasattr(w, "grid"):
        return np.asarray(w.values), w.grid
    if grid is None:
        raise TypeError("a grid is required for raw arrays")
    v = np.asarray(w, dtype=float)
    if v.shape == grid.shape:
        v = np.broadcast_to(v, grid.field_shape)
    return v, grid


def _space_time_norm(per_step: list[np.ndarray], vol: float, dt: float, p: float, q: float) -> float:
    if not per_step:
        return 0.0
    if math.isinf(p):
        s = np.array([np.max(np.abs(v)) if v.size else 0.0 for v in per_step])
    else:
        s = np.array([np.sum(np.abs(v) ** p) * vol for v in per_step]) ** (1.0 / p)
    if math.isinf(q):
        return float(np.max(s))
    return float(np.sum(s**q) * dt) ** (1.0 / q)


def bochner_norm(w, p: float, q: float, cells: CellSet | None = None, grid: SpaceTimeGrid | None = None) -> float:
    """Midpoint-rule ``L^{p,q}`` norm over ``Q`` or over a cell set.

    Step ``k >= 1`` stands for the interval ``((k-1) dt, k dt]``; step 0 is
    the initial slice and carries no time measure. ``p`` or ``q`` may be
    ``math.inf``.
    """
    if p < 1 or q < 1:
        raise ValueError("exponents must be >= 1")
    v, grid = _as_values(w, grid)
    if cells is None:
        per_step = [v[k] for k in range(1, grid.nt + 1)]
    elif cells.slices is not None:
        sl = cells.slices
        k0 = max(sl[0].start, 1)
        block = v[(slice(k0, sl[0].stop),) + sl[1:]]
        per_step = list(block)
    else:
        per_step = [v[k][cells.mask[k]] for k in cells.steps() if k >= 1]
    return _space_time_norm(per_step, grid.cell_volume, grid.dt, p, q)


def _window_counts(sigma: float, h: float) -> list[int]:
    """Cell counts of an open interval of length ``sigma`` centred at a cell center or a face."""
    half = sigma / 2 - 1e-9 * h
    counts = []
    for offset in (0.0, 0.5):
        j = np.arange(-int(half / h) - 2, int(half / h) + 3)
        counts.append(int(np.sum(np.abs((j + offset) * h) < half)))
    return sorted(set(c for c in counts if c > 0))


def sup_norm_over_S(w, p: float, q: float, T: float | None = None, grid: SpaceTimeGrid | None = None) -> float:
    """Supremum of ``||w||_{p,q}`` over the cylinders ``Q(sigma)``, ``sigma = min(1, sqrt(T))``.

    Cylinder centers run over cell centers and cell faces in space and over
    step times in time; only cylinders inside the computational box count.
    """
    v, grid = _as_values(w, grid)
    T = grid.T if T is None else T
    sigma = min(1.0, math.sqrt(T))
    L = math.ceil(sigma**2 / grid.dt - 1e-9)
    if L > grid.nt:
        raise ValueError(f"time window of {L} steps exceeds the grid's {grid.nt} steps")
    body = np.abs(np.asarray(v[1:], dtype=float))
    if not math.isinf(p):
        body = body**p
    counts = _window_counts(sigma, grid.h)
    best = 0.0
    combos = [()]
    for d in range(grid.n):
        combos = [c + (m,) for c in combos for m in counts if m <= grid.shape[d]]
    if not combos:
        raise ValueError("Q(sigma) does not fit in the computational box")
    for combo in combos:
        s = body
        for d, m in enumerate(combo):
            s = _kernels.window_max(s, m, d + 1) if math.isinf(p) else _kernels.window_sum(s, m, d + 1)
        if not math.isinf(p):
            s = (s * grid.cell_volume) ** (1.0 / p)
        if math.isinf(q):
            t = _kernels.window_max(s, L, 0)
        else:
            t = (_kernels.window_sum(s**q, L, 0) * grid.dt) ** (1.0 / q)
        best = max(best, float(np.max(t)))
    return best


# ---------------------------------------------------------------------------
# Exponent pairs and theta
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentPair:
    p: float
    q: float
    kind: str = "first_order"

    def __post_init__(self):
        if self.kind not in ("first_order", "zero_order"):
            raise ValueError(f"unknown exponent kind {self.kind!r}")

    def load_n(self, n: int) -> float:
        return (0.0 if math.isinf(self.p) else n / (2 * self.p)) + (0.0 if math.isinf(self.q) else 1 / self.q)


@dataclass(frozen=True)
class ExponentCheck:
    ok: bool
    margin: float
    reason: str = ""


def check_exponent_pair(pair: ExponentPair, n: int) -> ExponentCheck:
    """Strict integrability rule for one coefficient, with the achieved margin."""
    load = pair.load_n(n)
    if pair.kind == "first_order":
        margin = 0.5 - load
        if not pair.p > 2:
            return ExponentCheck(False, margin, f"p={pair.p} violates p > 2")
        if not margin > 0:
            return ExponentCheck(False, margin, f"n/(2p)+1/q={load} violates < 1/2")
    else:
        margin = 1.0 - load
        if not pair.p > 1:
            return ExponentCheck(False, margin, f"p={pair.p} violates p > 1")
        if not margin > 0:
            return ExponentCheck(False, margin, f"n/(2p)+1/q={load} violates < 1")
    return ExponentCheck(True, margin)


def _theta_of(pair: ExponentPair, n: int) -> float:
    load = pair.load_n(n)
    inv_p = 0.0 if math.isinf(pair.p) else 1 / pair.p
    if pair.kind == "first_order":
        return min(1 - 2 * inv_p, 1 - 2 * load)
    return min(1 - inv_p, 1 - load)


def compute_theta(pairs, n: int, cap: float = THETA_CAP) -> float:
    """Largest ``theta`` satisfying every relaxed exponent inequality, capped at ``cap``.

    ``pairs`` is a mapping ``name -> ExponentPair`` or a plain sequence.
    """
    items = pairs.items() if isinstance(pairs, Mapping) else enumerate(pairs)
    theta = 1.0
    for name, pair in items:
        chk = check_exponent_pair(pair, n)
        if not chk.ok:
            raise StructureError(f"coefficient {name}: {chk.reason}")
        theta = min(theta, _theta_of(pair, n))
    if not theta > 0:
        raise StructureError("theta must be positive")
    return min(theta, cap)


# ---------------------------------------------------------------------------
# Structure bounds
# ---------------------------------------------------------------------------


def _default_pair(name: str) -> ExponentPair:
    return ExponentPair(math.inf, math.inf, "first_order" if name in FIRST_ORDER else "zero_order")


@dataclass(frozen=True)
class StructureBounds:
    """The constants a structural constant may depend on."""

    a: float
    a_bar: float
    norms: Mapping[str, float]
    pairs: Mapping[str, ExponentPair]
    theta: float
    n: int
    T: float
    omega_volume: float

    def __post_init__(self):
        if not (self.a > 0 and self.a_bar > 0):
            raise StructureError("a and a_bar must be positive")
        if not 0 < self.theta < 1:
            raise StructureError("theta must lie in (0, 1)")

    def norm(self, name: str) -> float:
        return float(self.norms.get(name, 0.0))

    def k_maximum(self, M: float) -> float:
        return (self.norm("b") + self.norm("d")) * abs(M) + self.norm("f") + self.norm("g")

    def k_local(self) -> float:
        return self.norm("f") + self.norm("g") + self.norm("h")

    @classmethod
    def from_fields(
        cls,
        grid: SpaceTimeGrid,
        a: float,
        a_bar: float,
        fields: Mapping[str, object] | None = None,
        pairs: Mapping[str, ExponentPair] | None = None,
        strip: bool = False,
    ) -> "StructureBounds":
        """Norms of the given coefficient fields in their exponent spaces.

        ``fields`` maps names in ``b..h`` to a :class:`CoefficientField` or a
        scalar. With ``strip=True`` the norms are the ``L^{p,q}(S)``-class
        suprema over unit-scale cylinders.
        """
        fields = dict(fields or {})
        pairs = {name: (pairs or {}).get(name, _default_pair(name)) for name in COEFFICIENT_NAMES}
        norms = {}
        for name in COEFFICIENT_NAMES:
            w = fields.get(name, 0.0)
            if not isinstance(w, CoefficientField):
                w = constant_field(grid, float(w), name)
            pr = pairs[name]
            norms[name] = (sup_norm_over_S(w, pr.p, pr.q) if strip else bochner_norm(w, pr.p, pr.q))
        theta = compute_theta(pairs, grid.n)
        return cls(a, a_bar, norms, pairs, theta, grid.n, grid.T, grid.omega_volume)


# ---------------------------------------------------------------------------
# Linear coefficients
# ---------------------------------------------------------------------------


def _time_dependent(arr: np.ndarray | None, grid: SpaceTimeGrid, trailing: int) -> bool:
    if arr is None:
        return False
    return arr.ndim == grid.n + trailing + 1


@dataclass(frozen=True, eq=False)
class LinearCoefficients:
    """Coefficients of ``u_t = {A_ij u_{x_i} + A_j u + F_j}_{x_j} + B_j u_{x_j} + C u + G``.

    ``A`` has shape ``(*shape, n, n)``; vector fields ``(*shape, n)``; scalar
    fields ``shape``. Each may carry a leading ``nt + 1`` time axis.
    """

    grid: SpaceTimeGrid
    A: np.ndarray
    nu: float
    A_vec: np.ndarray | None = None
    B_vec: np.ndarray | None = None
    F_vec: np.ndarray | None = None
    C: np.ndarray | None = None
    G: np.ndarray | None = None

    def __post_init__(self):
        g = self.grid
        for name, trailing in (("A", 2), ("A_vec", 1), ("B_vec", 1), ("F_vec", 1), ("C", 0), ("G", 0)):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            tail = (g.n,) * trailing
            if arr.shape not in (g.shape + tail, g.field_shape + tail):
                raise ValueError(f"{name}: shape {arr.shape} does not match grid {g.shape} + {tail}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.nu > 0:
            raise ValueError("declared ellipticity nu must be positive")

    @property
    def time_dependent(self) -> bool:
        g = self.grid
        return any(
            _time_dependent(getattr(self, name), g, tr)
            for name, tr in (("A", 2), ("A_vec", 1), ("B_vec", 1), ("F_vec", 1), ("C", 0), ("G", 0))
        )

    @property
    def homogeneous(self) -> bool:
        return self.F_vec is None and self.G is None

    @property
    def conservative(self) -> bool:
        """No lower-order terms: pure divergence form ``u_t = div(A grad u)``."""
        return all(getattr(self, n) is None for n in ("A_vec", "B_vec", "F_vec", "C", "G"))

    def at_step(self, k: int) -> dict:
        g = self.grid
        out = {}
        for name, tr in (("A", 2), ("A_vec", 1), ("B_vec", 1), ("F_vec", 1), ("C", 0), ("G", 0)):
            arr = getattr(self, name)
            if arr is not None and _time_dependent(arr, g, tr):
                arr = arr[k]
            out[name] = arr
        return out

    def diagonal(self) -> bool:
        n = self.grid.n
        off = ~np.eye(n, dtype=bool)
        return not np.any(self.A[..., off])

    def without_sources(self) -> "LinearCoefficients":
        return LinearCoefficients(self.grid, self.A, self.nu, self.A_vec, self.B_vec, None, self.C, None)

    def with_sources(self, F_vec=None, G=None) -> "LinearCoefficients":
        return LinearCoefficients(self.grid, self.A, self.nu, self.A_vec, self.B_vec, F_vec, self.C, G)

    @classmethod
    def isotropic(cls, a, nu: float | None = None, **lower) -> "LinearCoefficients":
        """``A_ij = a(x,t) delta_ij`` from a :class:`CoefficientField`."""
        grid = a.grid
        A = a.values[..., None, None] * np.eye(grid.n)
        nu = float(np.min(a.values)) if nu is None else nu
        return cls(grid, A, nu, **lower)

    @classmethod
    def heat(cls, grid: SpaceTimeGrid, alpha: float = 1.0, **lower) -> "LinearCoefficients":
        return cls.isotropic(constant_field(grid, alpha), **lower)


def ellipticity_check(lc: LinearCoefficients) -> float:
    """Smallest eigenvalue of the symmetrized principal tensor over all samples."""
    A = lc.A
    sym = 0.5 * (A + np.swapaxes(A, -1, -2))
    nu = float(np.min(np.linalg.eigvalsh(sym.reshape(-1, lc.grid.n, lc.grid.n))[:, 0]))
    if nu <= 0:
        raise NotParabolicError(f"smallest eigenvalue {nu} <= 0: not uniformly parabolic")
    return nu


# ---------------------------------------------------------------------------
# Structure functions
# ---------------------------------------------------------------------------

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class StructureFunctions:
    """Flux ``A(x,t,u,p)`` and source ``B(x,t,u,p)`` with declared bounds.

    Evaluators are vectorized: ``x`` has shape ``(..., n)``, ``u`` shape
    ``(...)``, ``p`` shape ``(..., n)``. ``coefficients`` maps names in ``b..h``
    to callables ``(x, t) -> values`` (missing names are zero).
    """

    name: str
    A: Callable
    B: Callable
    a: float
    a_bar: float
    coefficients: Mapping[str, Coefficient] = field(default_factory=dict)
    linear: LinearCoefficients | None = None

    def coefficient(self, name: str, x: np.ndarray, t) -> np.ndarray:
        fn = self.coefficients.get(name)
        shape = np.shape(x)[:-1]
        if fn is None:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(fn(x, t), dtype=float), shape)


def _sampler(values: np.ndarray, grid: SpaceTimeGrid, trailing: int):
    """Piecewise-constant point evaluator for a coefficient array."""
    td = _time_dependent(values, grid, trailing)

    def fn(x, t):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        idx = np.floor((x.reshape(-1, grid.n) - grid.lower) / grid.h).astype(int)
        idx = np.clip(idx, 0, np.array(grid.shape) - 1)
        if td:
            k = np.clip(np.ceil(np.asarray(t, dtype=float) / grid.dt - 1e-9).astype(int), 0, grid.nt)
            k = np.broadcast_to(k, shape).reshape(-1)
            out = values[(k,) + tuple(idx.T)]
        else:
            out = values[tuple(idx.T)]
        return out.reshape(shape + values.shape[values.ndim - trailing :])

    return fn


def linear_structure(lc: LinearCoefficients, eps: float = 0.1) -> StructureFunctions:
    """Wrap linear coefficients as structure functions with derived ``b..h``.

    With ``a = nu (1 - eps)`` the coercivity line absorbs the lower-order flux
    terms through ``b = |A_j| / sqrt(2 nu eps)`` and ``f = |F| / sqrt(2 nu eps)``.
    """
    g = lc.grid
    A_s = _sampler(lc.A, g, 2)
    vec = {k: _sampler(getattr(lc, k), g, 1) for k in ("A_vec", "B_vec", "F_vec") if getattr(lc, k) is not None}
    sca = {k: _sampler(getattr(lc, k), g, 0) for k in ("C", "G") if getattr(lc, k) is not None}

    def zeros_vec(x, t):
        return np.zeros(np.shape(x))

    def zeros_sca(x, t):
        return np.zeros(np.shape(x)[:-1])

    Av, Bv, Fv = (vec.get(k, zeros_vec) for k in ("A_vec", "B_vec", "F_vec"))
    Cs, Gs = (sca.get(k, zeros_sca) for k in ("C", "G"))

    def flux(x, t, u, p):
        A = A_s(x, t)
        return np.einsum("...ij,...i->...j", A, p) + Av(x, t) * np.asarray(u)[..., None] + Fv(x, t)

    def source(x, t, u, p):
        return np.sum(Bv(x, t) * p, axis=-1) + Cs(x, t) * u + Gs(x, t)

    s = math.sqrt(2 * lc.nu * eps)

    def norm_of(fn):
        return lambda x, t: np.linalg.norm(fn(x, t), axis=-1)

    a_bar = float(np.max(np.linalg.norm(lc.A.reshape(-1, g.n, g.n), ord=2, axis=(1, 2))))
    coeffs = {
        "b": lambda x, t: np.linalg.norm(Av(x, t), axis=-1) / s,
        "f": lambda x, t: np.linalg.norm(Fv(x, t), axis=-1) / s,
        "c": norm_of(Bv),
        "d": lambda x, t: np.abs(Cs(x, t)),
        "g": lambda x, t: np.abs(Gs(x, t)),
        "e": norm_of(Av),
        "h": norm_of(Fv),
    }
    return StructureFunctions("linear", flux, source, lc.nu * (1 - eps), a_bar, coeffs, linear=lc)


def bounded_nonlinear_structure(c: CoefficientField | float = 0.0, p_cap: float = 10.0) -> StructureFunctions:
    """``A = (1 + sin(u)/2) p`` and ``B = c(x,t) min(|p|, p_cap)``; ``a = 1/2``, ``a_bar = 3/2``."""
    if isinstance(c, CoefficientField):
        c_fn = _sampler(c.values, c.grid, 0)
    else:
        cval = float(c)

        def c_fn(x, t):
            return np.full(np.shape(x)[:-1], cval)

    def flux(x, t, u, p):
        return (1 + 0.5 * np.sin(u))[..., None] * p

    def source(x, t, u, p):
        return c_fn(x, t) * np.minimum(np.linalg.norm(p, axis=-1), p_cap)

    return StructureFunctions("bounded_nonlinear", flux, source, 0.5, 1.5, {"c": c_fn})


_FAMILIES: dict[str, Callable[..., StructureFunctions]] = {
    "linear": linear_structure,
    "bounded_nonlinear": bounded_nonlinear_structure,
}


def register_structure(name: str, factory: Callable[..., StructureFunctions]) -> None:
    """Add a user structure family to the registry."""
    if name in _FAMILIES:
        raise KeyError(f"structure family {name!r} already registered")
    _FAMILIES[name] = factory


def structure_family(name: str, *args, **kwargs) -> StructureFunctions:
    try:
        factory = _FAMILIES[name]
    except KeyError:
        raise KeyError(f"unknown structure family {name!r}; known: {sorted(_FAMILIES)}") from None
    return factory(*args, **kwargs)


@dataclass
class StructureReport:
    ok: bool
    worst_slack: dict[str, float]
    violations: dict[str, np.ndarray]
    n_samples: int

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "worst_slack": {k: float(v) for k, v in self.worst_slack.items()},
            "n_violations": {k: int(v.size) for k, v in self.violations.items()},
            "n_samples": self.n_samples,
        }


def verify_structure(sf: StructureFunctions, samples, tol: float = 1e-12) -> StructureReport:
    """Evaluate the three structure inequalities on a sample cloud.

    ``samples`` is ``(x, t, u, p)`` with ``x`` of shape ``(m, n)``, ``t`` and
    ``u`` of shape ``(m,)`` and ``p`` of shape ``(m, n)``. Violations are
    reported, never raised.
    """
    x, t, u, p = (np.asarray(v, dtype=float) for v in samples)
    x = x.reshape(len(u), -1)
    p = p.reshape(len(u), -1)
    A = np.asarray(sf.A(x, t, u, p), dtype=float)
    B = np.asarray(sf.B(x, t, u, p), dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise StructureError("structure functions returned non-finite values")
    co = {name: sf.coefficient(name, x, t) for name in COEFFICIENT_NAMES}
    pn = np.linalg.norm(p, axis=-1)
    au = np.abs(u)
    slack = {
        "coercivity": np.sum(p * A, axis=-1) - (sf.a * pn**2 - co["b"] ** 2 * u**2 - co["f"] ** 2),
        "source_growth": co["c"] * pn + co["d"] * au + co["g"] - np.abs(B),
        "flux_growth": sf.a_bar * pn + co["e"] * au + co["h"] - np.linalg.norm(A, axis=-1),
    }
    scale = 1.0 + pn**2 + u**2
    violations = {k: np.nonzero(v < -tol * scale)[0] for k, v in slack.items()}
    worst = {k: float(np.min(v)) for k, v in slack.items()}
    ok = all(v.size == 0 for v in violations.values())
    return StructureReport(ok, worst, violations, len(u))


def random_samples(
    grid: SpaceTimeGrid, m: int, seed: int = 0, u_range: float = 5.0, p_range: float = 5.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Uniform probe cloud ``(x, t, u, p)`` inside ``Q``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(grid.lower, grid.upper, size=(m, grid.n))
    t = rng.uniform(0, grid.T, size=m)
    u = rng.uniform(-u_range, u_range, size=m)
    p = rng.uniform(-p_range, p_range, size=(m, grid.n))
    return x, t, u, p
