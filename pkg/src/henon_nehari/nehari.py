"""Generalized Nehari projection and ground-state minimisation.

For v in Y (the H-orthogonal complement of Z) the fiber map
psi(t, s) = phi(t v + sum_j s_j e_j) has a unique maximiser with t > 0; that
point lies on the generalized Nehari set and its value is the fiber maximum.
The ground-state level is the infimum of fiber maxima over the unit sphere of
Y, which :func:`minimize_over_Y` computes by Riemannian gradient descent with
renormalisation as retraction.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .functional import FunctionalContext, energy
from .grid import Field, ProblemSpec, Weights
from .spectral import Operator, SubspaceSplit

log = logging.getLogger(__name__)

__all__ = [
    "NehariPoint",
    "NehariConfig",
    "GroundStateReport",
    "NehariError",
    "UnconvergedWarning",
    "FiberProblem",
    "project_to_nehari",
    "minimize_over_Y",
    "level_c",
    "random_smooth_field",
]


class NehariError(RuntimeError):
    """The fiber projection failed (no positive maximiser found or Newton stalled)."""


class UnconvergedWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class NehariPoint:
    u: Field
    f: float
    g_coords: np.ndarray
    v: Field
    residual: float
    phi: float
    iterations: int


class FiberProblem:
    """psi(c) = phi(c_0 v + sum_j c_j e_j) for a fixed unit direction v in Y.

    Because v is H- and L2-orthogonal to the eigenfields, the quadratic part
    is diagonal: 0.5 a_v t^2 + 0.5 sum_j (lambda_j - lambda) s_j^2.
    """

    def __init__(self, x: np.ndarray, ctx: FunctionalContext, split: SubspaceSplit):
        self.x = x
        self.ctx = ctx
        self.p = ctx.p
        lam = ctx.spec.lam
        self.a_v = ctx.op.h_norm2(x) - lam * float(x @ (ctx.mass * x))
        self.quad = np.concatenate([[self.a_v], split.eigvals - lam])
        self.h_scale = np.concatenate([[np.sqrt(ctx.op.h_norm2(x))], np.sqrt(split.eigvals)])
        self.basis = np.ascontiguousarray(np.vstack([x[None, :], split.basis]))
        self._terms = _kernels.fiber_terms

    def evaluate(self, c):
        crit, dcrit, hcrit = self._terms(self.basis, np.ascontiguousarray(c, dtype=float),
                                         self.ctx.rho, self.p)
        value = 0.5 * float(np.sum(self.quad * c * c)) - crit / self.p
        grad = self.quad * c - dcrit
        hess = np.diag(self.quad) - (self.p - 1.0) * hcrit
        return value, grad, hess

    def residual(self, grad):
        """H-norm of the projection of grad phi(u) onto R v + Z."""
        return float(np.linalg.norm(grad / self.h_scale))

    def h_norm(self, c):
        return float(np.linalg.norm(c * self.h_scale))

    def closed_form_t(self):
        """Fiber maximiser along R+ v alone: (A/B)^(1/(p-2))."""
        B = float(np.sum(self.ctx.rho * np.abs(self.x) ** self.p))
        if self.a_v <= 0 or B <= 0:
            raise NehariError(f"direction has no positive fiber maximum (A={self.a_v:.3e}, B={B:.3e})")
        return (self.a_v / B) ** (1.0 / (self.p - 2.0))

    def maximize_s(self, t, s0, maxit=60):
        """Concave maximisation over the Z-coordinates at fixed t."""
        m = len(s0)
        s = np.array(s0, dtype=float)
        if m == 0:
            return s
        c = np.concatenate([[t], s])
        val, g, H = self.evaluate(c)
        for _ in range(maxit):
            gs, Hs = g[1:], H[1:, 1:]
            scale = max(1.0, self.h_norm(c))
            if np.linalg.norm(gs / self.h_scale[1:]) <= 1e-12 * scale:
                break
            step = np.linalg.solve(Hs, -gs)
            if np.linalg.norm(step * self.h_scale[1:]) <= 1e-14 * scale:
                break
            a = 1.0
            while a > 1e-6:
                cn = c.copy()
                cn[1:] += a * step
                vn, gn, Hn = self.evaluate(cn)
                if vn >= val + 1e-4 * a * float(gs @ step):
                    break
                a *= 0.5
            else:
                break
            c, val, g, H = cn, vn, gn, Hn
        return c[1:]

    def newton(self, c0, tol, maxit=100):
        c = np.array(c0, dtype=float)
        val, g, H = self.evaluate(c)
        res = self.residual(g)
        for it in range(1, maxit + 1):
            scale = max(1.0, self.h_norm(c))
            if res <= tol * scale:
                return c, val, res, it - 1
            try:
                np.linalg.cholesky(-H)
            except np.linalg.LinAlgError:
                return c, val, res, -it
            step = np.linalg.solve(H, -g)
            merit = res * res
            a = 1.0
            while a > 1e-10:
                cn = c + a * step
                if cn[0] > 0:
                    vn, gn, Hn = self.evaluate(cn)
                    rn = self.residual(gn)
                    if rn * rn <= (1.0 - 1e-4 * a) * merit:
                        break
                a *= 0.5
            else:
                return c, val, res, -it
            c, val, g, H, res = cn, vn, gn, Hn, rn
        return c, val, res, -maxit


def _to_Y(x: np.ndarray, split: SubspaceSplit, mass: np.ndarray) -> np.ndarray:
    if split.m == 0:
        return x
    return x - split.basis.T @ (split.basis @ (mass * x))


def _project_vec(x, ctx, split, tol, warm=None, maxit=100):
    """Fiber projection on interior vectors; returns (FiberProblem, coords, value, residual, its)."""
    x = np.asarray(x, dtype=float)
    h0 = ctx.op.h_norm2(x)
    x = _to_Y(x, split, ctx.mass)
    hn = ctx.op.h_norm2(x)
    if not hn > 1e-20 * h0 or hn == 0:
        raise NehariError("direction has no Y-component")
    x = x / np.sqrt(hn)
    fib = FiberProblem(x, ctx, split)
    t0 = fib.closed_form_t()
    m = split.m
    starts = []
    if warm is not None and warm[0] > 0:
        starts.append(np.asarray(warm, dtype=float))
    starts.append(np.concatenate([[t0], fib.maximize_s(t0, np.zeros(m))]))
    best = None
    for c0 in starts:
        c, val, res, its = fib.newton(c0, tol, maxit)
        if its >= 0:
            return fib, c, val, res, its
        if best is None or res < best[3]:
            best = (fib, c, val, res, its)
    # fallback: log-spaced scan in t, concave inner solve in s, then Newton again
    ts = t0 * np.logspace(-3, 3, 61)
    vals = []
    s = np.zeros(m)
    for t in ts:
        s = fib.maximize_s(t, s)
        vals.append((fib.evaluate(np.concatenate([[t], s]))[0], t, s.copy()))
    _, tb, sb = max(vals, key=lambda item: item[0])
    c, val, res, its = fib.newton(np.concatenate([[tb], sb]), tol, maxit)
    if its >= 0:
        return fib, c, val, res, its
    if c[0] <= 1e-12 * t0:
        raise NehariError("fiber maximiser driven to t = 0")
    fib, c, val, res, its = min([best, (fib, c, val, res, its)], key=lambda b: b[3])
    raise NehariError(f"fiber Newton did not converge: residual {res:.3e} after {abs(its)} iterations")


def project_to_nehari(v: Field, split: SubspaceSplit, spec: ProblemSpec, weights: Weights | None,
                      op: Operator, tol: float = 1e-9, warm=None) -> NehariPoint:
    """Maximise phi over the fiber R+ v + Z.

    ``v`` is first projected onto Y and normalised in H.  ``tol`` is relative
    to max(1, ||u||_H).  Raises :class:`NehariError` on failure.
    """
    ctx = FunctionalContext(spec, op)
    fib, c, val, res, its = _project_vec(v.interior(), ctx, split, tol, warm)
    u = c @ fib.basis
    return NehariPoint(
        u=Field.from_interior(u, op.grid),
        f=float(c[0]),
        g_coords=c[1:].copy(),
        v=Field.from_interior(fib.x, op.grid),
        residual=res,
        phi=val,
        iterations=its,
    )


@dataclass
class NehariConfig:
    tol_c: float = 1e-9
    tol_g: float = 1e-6
    max_iter: int = 3000
    seed_policy: str = "instanton"
    seed_eps: float = 0.1
    seed: int = 0
    stall_steps: int = 20
    armijo: float = 1e-4

    def __post_init__(self):
        if self.seed_policy not in ("instanton", "random"):
            raise ValueError(f"unknown seed policy {self.seed_policy!r}")
        if self.tol_c <= 0 or self.tol_g <= 0 or self.max_iter < 1:
            raise ValueError("tolerances must be positive and max_iter >= 1")


@dataclass(eq=False)
class GroundStateReport:
    u: Field
    level_c: float
    grad_norm: float
    constraint_residual: float
    iterations: int
    converged: bool
    f: float
    g_coords: np.ndarray
    changes_sign: bool
    theta_monotone_defect: float
    morse_index: int | None = None
    history: list = field(default_factory=list, repr=False)
    metadata: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "level_c": self.level_c,
            "grad_norm": self.grad_norm,
            "constraint_residual": self.constraint_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "fiber_t": self.f,
            "fiber_z": [float(s) for s in self.g_coords],
            "changes_sign": self.changes_sign,
            "theta_monotone_defect": self.theta_monotone_defect,
            "morse_index": self.morse_index,
        }


def random_smooth_field(grid, seed: int = 0, modes: int = 4) -> Field:
    """Low-frequency random field vanishing on r = 1."""
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal((modes, modes))
    R, T = grid.mesh()
    vals = np.zeros(grid.shape)
    for k in range(modes):
        for l in range(modes):
            vals += coef[k, l] * np.cos(k * np.pi * R / 2) * np.cos(l * T) / (1 + k + l)
    vals *= 1.0 - R ** 2
    vals[-1, :] = 0.0
    return Field(vals, grid)


def _initial_direction(split, spec, grid, cfg):
    if cfg.seed_policy == "random":
        return random_smooth_field(grid, cfg.seed)
    from .instanton import InstantonParams, build_instanton
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_instanton(InstantonParams.seed_default(cfg.seed_eps), grid, spec)


def minimize_over_Y(split: SubspaceSplit, spec: ProblemSpec, weights: Weights | None, op: Operator,
                    cfg: NehariConfig | None = None, v0: Field | None = None) -> GroundStateReport:
    """Minimise the fiber maximum over unit directions of Y.

    Each step projects onto the Nehari set, takes the full H-gradient there,
    keeps its component tangent to the unit sphere of Y, and performs an
    Armijo line search (Barzilai-Borwein trial step) followed by
    renormalisation.  Convergence requires both the constraint residual and
    the full gradient norm to be below tolerance, relative to max(1, ||u||_H).
    """
    from .diagnostics import sign_change, theta_monotonicity

    cfg = cfg or NehariConfig()
    grid = op.grid
    ctx = FunctionalContext(spec, op)
    mass = ctx.mass
    if v0 is None:
        v0 = _initial_direction(split, spec, grid, cfg)
    fib, c, J, res, _ = _project_vec(v0.interior(), ctx, split, cfg.tol_c)
    x = fib.x
    u = c @ fib.basis
    history = [J]
    tau = None
    prev = None
    stall = 0
    converged = False
    it = 0
    gnorm = np.inf
    for it in range(cfg.max_iter + 1):
        g = ctx.gradient(u)
        gnorm = np.sqrt(max(op.h_norm2(g), 0.0))
        scale = max(1.0, fib.h_norm(c))
        if gnorm <= cfg.tol_g * scale and res <= cfg.tol_c * scale:
            converged = True
            break
        if it == cfg.max_iter or stall >= cfg.stall_steps:
            break
        d = _to_Y(g, split, mass)
        d = d - float(x @ (op.stiffness @ d)) * x
        D = c[0] * d
        dn2 = op.h_norm2(D)
        if prev is not None:
            s_vec, y_vec = x - prev[0], D - prev[1]
            sy = float(s_vec @ (op.stiffness @ y_vec))
            if sy > 0:
                tau = op.h_norm2(s_vec) / sy
        if tau is None or not np.isfinite(tau):
            tau = 1.0 / c[0] ** 2
        tau = float(np.clip(tau, 1e-8 / c[0] ** 2, 1e4 / c[0] ** 2))

        accepted = False
        step = tau
        J_n = np.inf
        for _ in range(40):
            xn = x - step * D
            try:
                fib_n, c_n, J_n, res_n, _ = _project_vec(xn, ctx, split, cfg.tol_c, warm=c)
            except NehariError:
                step *= 0.5
                continue
            if J_n <= J - cfg.armijo * step * dn2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no sufficient decrease at rounding level; accept only a non-increase
            if J_n <= J:
                accepted = True
            else:
                stall += 1
                tau = step
                continue
        decrease = J - J_n
        stall = stall + 1 if decrease <= np.finfo(float).eps * max(1.0, abs(J)) else 0
        prev = (x, D)
        fib, c, J, res = fib_n, c_n, J_n, res_n
        x = fib.x
        u = c @ fib.basis
        history.append(J)
        tau = step
        if it % 50 == 0:
            log.debug("iter %d  phi=%.12g  |grad|_H=%.3e", it, J, gnorm)

    uf = Field.from_interior(u, grid)
    sc = sign_change(uf, grid.weights)
    meta = {
        "spec": spec.to_dict(),
        "grid": grid.metadata(),
        "m": split.m,
        "seed_policy": cfg.seed_policy,
        "seed": cfg.seed,
        "symmetric_class": True,
    }
    if not converged:
        log.warning("ground-state iteration stopped without convergence: |grad|_H=%.3e", gnorm)
    return GroundStateReport(
        u=uf,
        level_c=float(J),
        grad_norm=float(gnorm),
        constraint_residual=float(res),
        iterations=it,
        converged=converged,
        f=float(c[0]),
        g_coords=c[1:].copy(),
        changes_sign=bool(sc),
        theta_monotone_defect=theta_monotonicity(uf),
        history=history,
        metadata=meta,
    )


def level_c(report: GroundStateReport, spec: ProblemSpec | None = None) -> float:
    """phi at the computed ground state; warns if the run did not converge."""
    if not report.converged:
        warnings.warn("level taken from an unconverged ground-state run", UnconvergedWarning,
                      stacklevel=2)
    if spec is None:
        return report.level_c
    return energy(report.u, spec).phi
