"""Axisymmetric (r, theta) grid on the unit N-ball and its quadrature.

Fields are functions u(r, theta) where theta is the angle from the symmetry
axis.  Radial nodes are cell centred, r_i = (i + 1/2) dr with dr chosen so
that the last node sits exactly on the boundary r = 1; angular nodes are the
midpoints of ntheta equal cells of [0, pi].  The discrete Dirichlet form is a
two-point flux (finite-volume) form whose coefficients vanish at r = 0 and
theta in {0, pi}, so the coordinate singularities never enter.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

from . import _kernels

__all__ = [
    "ProblemSpec",
    "Grid",
    "Weights",
    "Field",
    "GridMismatchError",
    "build_grid",
    "integrate",
    "weighted_power_integral",
    "h_inner",
    "ball_volume",
    "sphere_area",
    "read_field_csv",
    "write_field_csv",
]

MIN_NR = 8
MIN_NTHETA = 4


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """The Dirichlet problem -Lap u = lam u + |x|^alpha |u|^(p-2) u on the unit N-ball.

    ``p`` is the critical exponent 2N/(N-2).
    """

    N: int
    lam: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if isinstance(self.N, bool) or not isinstance(self.N, (int, np.integer)):
            raise TypeError(f"dimension must be an integer, got {self.N!r}")
        if self.N < 3:
            raise ValueError(f"dimension must be >= 3, got {self.N}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")

    @property
    def crit_exp(self) -> float:
        return 2.0 * self.N / (self.N - 2)

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(self.N, float(lam), self.alpha)

    def with_alpha(self, alpha: float) -> "ProblemSpec":
        return ProblemSpec(self.N, self.lam, float(alpha))

    def to_dict(self) -> dict:
        return {"N": int(self.N), "lambda": float(self.lam), "alpha": float(self.alpha),
                "crit_exp": self.crit_exp}


def sphere_area(k: int) -> float:
    """Surface measure of the unit k-sphere in R^(k+1)."""
    return 2.0 * pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def ball_volume(N: int) -> float:
    return pi ** (N / 2) / gamma(N / 2 + 1)


@dataclass(frozen=True, eq=False)
class Weights:
    """Node weights for dx and edge coefficients for |grad u|^2 dx.

    ``w[i, j]`` approximates the measure of the cell around node (i, j);
    ``cr`` (shape (nr-1, ntheta)) and ``ct`` (shape (nr, ntheta-1)) are the
    radial and angular edge coefficients of the Dirichlet form.
    """

    w: np.ndarray
    cr: np.ndarray
    ct: np.ndarray

    @property
    def shape(self):
        return self.w.shape

    def total(self) -> float:
        return float(np.sum(self.w))


@dataclass(frozen=True, eq=False)
class Grid:
    N: int
    nr: int
    ntheta: int
    r: np.ndarray
    theta: np.ndarray
    dr: float
    dtheta: float
    weights: Weights = field(repr=False)

    @property
    def shape(self):
        return (self.nr, self.ntheta)

    @property
    def boundary(self) -> np.ndarray:
        """Boolean mask of Dirichlet nodes (the r = 1 row)."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[-1, :] = True
        return mask

    @property
    def n_interior(self) -> int:
        return (self.nr - 1) * self.ntheta

    def interior(self, values: np.ndarray) -> np.ndarray:
        """Flatten the non-boundary rows into the solver's unknown vector."""
        return np.ascontiguousarray(values[:-1, :]).reshape(-1)

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`interior`: pad with the zero boundary row."""
        out = np.zeros(self.shape)
        out[:-1, :] = np.asarray(x).reshape(self.nr - 1, self.ntheta)
        return out

    def same_as(self, other: "Grid") -> bool:
        return other is self or (
            self.N == other.N and self.nr == other.nr and self.ntheta == other.ntheta
        )

    def mesh(self):
        return np.meshgrid(self.r, self.theta, indexing="ij")

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """theta -> pi - theta; exact on nodes because the angular grid is symmetric."""
        return values[:, ::-1]

    def metadata(self) -> dict:
        return {"N": int(self.N), "nr": int(self.nr), "ntheta": int(self.ntheta),
                "dr": float(self.dr), "dtheta": float(self.dtheta)}


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function, one value per node (boundary row included)."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"field shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_interior(cls, x: np.ndarray, grid: Grid) -> "Field":
        return cls(grid.embed(x), grid)

    @classmethod
    def from_function(cls, func, grid: Grid, dirichlet: bool = True) -> "Field":
        """Sample ``func(r, theta)`` on the nodes, zeroing the boundary row if asked."""
        R, T = grid.mesh()
        values = np.array(np.broadcast_to(func(R, T), grid.shape), dtype=float)
        if dirichlet:
            values[-1, :] = 0.0
        return cls(values, grid)

    @property
    def is_dirichlet(self) -> bool:
        return bool(np.all(self.values[-1, :] == 0.0))

    def interior(self) -> np.ndarray:
        return self.grid.interior(self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other):
        return Field(self.values + _values(other, self.grid), self.grid)

    def __sub__(self, other):
        return Field(self.values - _values(other, self.grid), self.grid)

    def __mul__(self, scalar):
        return Field(self.values * float(scalar), self.grid)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(-self.values, self.grid)


def _values(f, grid: Grid) -> np.ndarray:
    if isinstance(f, Field):
        if not f.grid.same_as(grid):
            raise GridMismatchError("fields live on different grids")
        return f.values
    return np.asarray(f, dtype=float)


def _mirrored(values: np.ndarray) -> np.ndarray:
    """Force exact symmetry under reversal (rounding in sin(pi - x) vs sin(x))."""
    n = values.shape[-1]
    half = values[..., : (n + 1) // 2]
    out = np.empty_like(values)
    out[..., : (n + 1) // 2] = half
    out[..., n - n // 2:] = half[..., : n // 2][..., ::-1]
    return out


def build_grid(spec: ProblemSpec, nr: int, ntheta: int) -> Grid:
    """Build the reduced grid and its midpoint quadrature for dimension ``spec.N``.

    Raises ValueError for ``nr < 8``, ``ntheta < 4`` or odd ``ntheta``.
    """
    if nr < MIN_NR:
        raise ValueError(f"nr must be >= {MIN_NR}, got {nr}")
    if ntheta < MIN_NTHETA:
        raise ValueError(f"ntheta must be >= {MIN_NTHETA}, got {ntheta}")
    if ntheta % 2:
        raise ValueError(f"ntheta must be even, got {ntheta}")
    N = int(spec.N)

    dr = 1.0 / (nr - 0.5)
    r = (np.arange(nr) + 0.5) * dr
    r[-1] = 1.0
    dtheta = pi / ntheta
    theta = _mirrored_theta(ntheta, dtheta)

    omega = sphere_area(N - 2)
    sin_nodes = _mirrored(np.sin(theta) ** (N - 2))
    theta_edges = (np.arange(1, ntheta)) * dtheta
    sin_edges = _mirrored(np.sin(theta_edges) ** (N - 2))

    radial_cell = r ** (N - 1) * dr
    radial_cell[-1] *= 0.5
    w = omega * np.outer(radial_cell, sin_nodes) * dtheta

    r_faces = np.arange(1, nr) * dr
    cr = omega * np.outer(r_faces ** (N - 1) / dr, sin_nodes) * dtheta
    ct = omega * np.outer(r ** (N - 3) * dr, sin_edges) / dtheta

    weights = Weights(w=w, cr=np.ascontiguousarray(cr), ct=np.ascontiguousarray(ct))
    return Grid(N=N, nr=nr, ntheta=ntheta, r=r, theta=theta, dr=dr, dtheta=dtheta,
                weights=weights)


def _mirrored_theta(ntheta, dtheta):
    theta = (np.arange(ntheta) + 0.5) * dtheta
    half = theta[: ntheta // 2]
    theta[ntheta // 2:] = (pi - half)[::-1]
    return theta


def _check(f: Field, weights: Weights) -> np.ndarray:
    if f.values.shape != weights.shape:
        raise GridMismatchError(f"field shape {f.values.shape} != weights shape {weights.shape}")
    return f.values


def integrate(f: Field, weights: Weights) -> float:
    """Midpoint quadrature of f over the ball."""
    return float(np.sum(_check(f, weights) * weights.w))


def weighted_power_integral(u: Field, p: float, alpha: float, weights: Weights | None = None) -> float:
    """Integral of |x|^alpha |u|^p."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    weights = u.grid.weights if weights is None else weights
    vals = _check(u, weights)
    radial = u.grid.r[:, None] ** alpha
    return float(np.sum(radial * np.abs(vals) ** p * weights.w))


def h_inner(u: Field, v: Field, weights: Weights | None = None) -> float:
    """Discrete Dirichlet inner product: integral of grad u . grad v."""
    weights = u.grid.weights if weights is None else weights
    a = _check(u, weights)
    b = _check(v, weights)
    if not (u.is_dirichlet and v.is_dirichlet):
        raise ValueError("h_inner requires fields vanishing on r = 1")
    if _kernels.HAS_NUMBA:
        return float(_kernels.edge_form(a, b, weights.cr, weights.ct))
    return _kernels.edge_form_numpy(a, b, weights.cr, weights.ct)


def write_field_csv(path, f: Field) -> None:
    """Write a field as CSV with header ``r,theta,value``, row-major over (r, theta)."""
    g = f.grid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "theta", "value"])
        for i in range(g.nr):
            ri = repr(float(g.r[i]))
            for j in range(g.ntheta):
                writer.writerow([ri, repr(float(g.theta[j])), repr(float(f.values[i, j]))])


def read_field_csv(path, spec: ProblemSpec) -> Field:
    """Read a field written by :func:`write_field_csv`, rebuilding its grid."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["r", "theta", "value"]:
            raise ValueError(f"{path}: expected header r,theta,value, got {header}")
        rows = [tuple(float(x) for x in row) for row in reader if row]
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValueError(f"{path}: malformed rows")
    r_vals = np.unique(data[:, 0])
    t_vals = np.unique(data[:, 1])
    nr, ntheta = len(r_vals), len(t_vals)
    if nr * ntheta != len(data):
        raise ValueError(f"{path}: {len(data)} rows do not form a {nr}x{ntheta} tensor grid")
    grid = build_grid(spec, nr, ntheta)
    if not (np.allclose(data[:, 0], np.repeat(grid.r, ntheta), rtol=0, atol=1e-12)
            and np.allclose(data[:, 1], np.tile(grid.theta, nr), rtol=0, atol=1e-12)):
        raise GridMismatchError(f"{path}: node coordinates do not match a {nr}x{ntheta} grid")
    return Field(data[:, 2].reshape(nr, ntheta), grid)
