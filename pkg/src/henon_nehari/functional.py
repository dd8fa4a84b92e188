"""Energy, H-gradient, Hessian action and the constraint map F.

Everything is measured in the Dirichlet inner product <u, v> = int grad u . grad v,
so gradients are Riesz representatives obtained through one Poisson solve.
The discrete energy and gradient are exactly dual: <h_gradient(u), v> is the
derivative of ``energy`` at u along v up to rounding.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .grid import Field, ProblemSpec, Weights, h_inner, integrate, weighted_power_integral
from .spectral import Operator, SubspaceSplit, project_Z

__all__ = [
    "EnergyBreakdown",
    "ConstraintValue",
    "energy",
    "h_gradient",
    "hessian_apply",
    "constraint_F",
    "FunctionalContext",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    mass: float
    critical: float
    phi: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConstraintValue:
    """F(u) = (<grad phi(u), u>, Z-coordinates of Q grad phi(u))."""

    s: float
    z: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.s ** 2 + np.sum(self.z ** 2)))


def energy(u: Field, spec: ProblemSpec, weights: Weights | None = None) -> EnergyBreakdown:
    weights = u.grid.weights if weights is None else weights
    d = h_inner(u, u, weights)
    m = integrate(Field(u.values ** 2, u.grid), weights)
    c = weighted_power_integral(u, spec.crit_exp, spec.alpha, weights)
    phi = 0.5 * (d - spec.lam * m) - c / spec.crit_exp
    return EnergyBreakdown(dirichlet=d, mass=m, critical=c, phi=phi)


class FunctionalContext:
    """Vector-level kernels on interior unknowns, shared by the solvers.

    ``rho`` holds node weight times |x|^alpha, the measure of the nonlinear term.
    """

    def __init__(self, spec: ProblemSpec, op: Operator):
        self.spec = spec
        self.op = op
        self.p = spec.crit_exp
        grid = op.grid
        self.radial = grid.interior(np.broadcast_to(grid.r[:, None] ** spec.alpha, grid.shape))
        self.mass = op.mass
        self.rho = np.ascontiguousarray(self.mass * self.radial)

    def nonlinearity(self, x):
        return self.radial * np.abs(x) ** (self.p - 2.0) * x

    def gradient(self, x):
        rhs = self.mass * (self.spec.lam * x + self.nonlinearity(x))
        return x - self.op.solve(rhs)

    def hessian(self, x, y):
        d = self.spec.lam + (self.p - 1.0) * self.radial * np.abs(x) ** (self.p - 2.0)
        return y - self.op.solve(self.mass * d * y)

    def phi(self, x):
        quad = self.op.h_norm2(x) - self.spec.lam * float(x @ (self.mass * x))
        crit = float(np.sum(self.rho * np.abs(x) ** self.p))
        return 0.5 * quad - crit / self.p


def h_gradient(u: Field, spec: ProblemSpec, weights: Weights | None, op: Operator) -> Field:
    """Riesz representative g = u - (-Lap)^-1 (lam u + |x|^alpha |u|^(p-2) u)."""
    if not u.is_dirichlet:
        raise ValueError("h_gradient requires a Dirichlet field")
    ctx = FunctionalContext(spec, op)
    x = u.interior()
    g = ctx.gradient(x)
    _check_solve(op, x - g, op.mass * (spec.lam * x + ctx.nonlinearity(x)))
    return Field.from_interior(g, u.grid)


def hessian_apply(u: Field, v: Field, spec: ProblemSpec, weights: Weights | None,
                  op: Operator) -> Field:
    """H-representative of D^2 phi(u)(v, .)."""
    ctx = FunctionalContext(spec, op)
    return Field.from_interior(ctx.hessian(u.interior(), v.interior()), u.grid)


def constraint_F(u: Field, split: SubspaceSplit, spec: ProblemSpec, weights: Weights | None,
                 op: Operator) -> ConstraintValue:
    if not np.any(u.values):
        raise ValueError("F is undefined at u = 0")
    g = h_gradient(u, spec, weights, op)
    return ConstraintValue(s=h_inner(g, u, weights), z=project_Z(g, split, weights))


def _check_solve(op: Operator, x: np.ndarray, b: np.ndarray, rtol: float = 1e-12):
    bn = np.linalg.norm(b)
    if bn == 0:
        return
    res = np.linalg.norm(op.stiffness @ x - b) / bn
    if res > rtol:
        raise RuntimeError(f"Poisson solve relative residual {res:.3e} exceeds {rtol:g}")
