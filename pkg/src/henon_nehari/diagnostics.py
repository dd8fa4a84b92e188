"""Qualitative checks on computed ground states.

Sign change, symmetric-class Morse index, equatorial polarization and the
angular monotonicity that characterises foliated Schwarz symmetry about the
axis theta = 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .functional import energy
from .grid import Field, ProblemSpec, Weights, h_inner, integrate, weighted_power_integral
from .spectral import Operator, SpectralError

__all__ = [
    "SignChange",
    "MorseResult",
    "SymmetryReport",
    "sign_change",
    "morse_index",
    "polarize_equatorial",
    "polarization_invariants",
    "theta_monotonicity",
    "orient",
]


@dataclass(frozen=True)
class SignChange:
    changes_sign: bool
    min: float
    max: float
    e1_integral: float | None = None

    def __bool__(self):
        return self.changes_sign


def sign_change(u: Field, weights: Weights | None = None, e1: Field | None = None,
                tol: float = 1e-8) -> SignChange:
    """min u < -tol |u|_inf and max u > tol |u|_inf; optionally int u e_1."""
    sup = u.sup_norm()
    if sup == 0:
        raise ValueError("sign change is undefined for the zero field")
    lo, hi = float(u.values.min()), float(u.values.max())
    e1_int = None
    if e1 is not None:
        weights = u.grid.weights if weights is None else weights
        e1_int = integrate(Field(u.values * e1.values, u.grid), weights)
    return SignChange(lo < -tol * sup and hi > tol * sup, lo, hi, e1_int)


@dataclass
class MorseResult:
    index: int
    eigenvalues: np.ndarray
    threshold: float
    ambiguous: int

    def __int__(self):
        return self.index

    def to_dict(self) -> dict:
        return {"symmetric_class_morse_index": self.index,
                "hessian_eigenvalues": [float(x) for x in self.eigenvalues],
                "eps_morse": self.threshold, "ambiguous_count": self.ambiguous}


def morse_index(u: Field, spec: ProblemSpec, weights: Weights | None, op: Operator, k: int,
                grad_norm: float | None = None, grad_tol: float | None = None,
                seed: int = 0) -> MorseResult:
    """Count negative eigenvalues of v -> hessian_apply(u, v), an H-self-adjoint map.

    Solves (K - M D) x = mu K x for the ``k`` algebraically smallest mu, where
    D = lam + (p-1) |x|^alpha |u|^(p-2).  Eigenvalues below -eps_morse count,
    eps_morse = 1e-6 * max(1, largest computed mu).
    """
    if grad_norm is not None and grad_tol is not None and grad_norm > grad_tol:
        raise ValueError(f"Morse index needs a critical point (|grad|={grad_norm:.3e})")
    p = spec.crit_exp
    radial = op.grid.interior(np.broadcast_to(op.grid.r[:, None] ** spec.alpha, op.grid.shape))
    x = u.interior()
    D = spec.lam + (p - 1.0) * radial * np.abs(x) ** (p - 2.0)
    A = (op.stiffness - sp.diags(op.mass * D)).tocsc()
    n = op.n
    k = min(k, n - 2)
    minv = LinearOperator((n, n), matvec=op.solve, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        mu = eigsh(A, k=k, M=op.stiffness, Minv=minv, which="SA", v0=v0, tol=1e-12,
                   return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise SpectralError(f"Hessian eigensolve did not converge ({len(exc.eigenvalues)}/{k})") from exc
    mu = np.sort(mu)
    eps_morse = 1e-6 * max(1.0, float(mu[-1]))
    index = int(np.sum(mu < -eps_morse))
    ambiguous = int(np.sum(np.abs(mu) <= eps_morse))
    return MorseResult(index=index, eigenvalues=mu, threshold=eps_morse, ambiguous=ambiguous)


def polarize_equatorial(u: Field) -> Field:
    """Polarization with respect to K = {x . p >= 0}, p the axis theta = 0.

    max(u, u o sigma) on theta < pi/2 and min on theta > pi/2, sigma the
    reflection theta -> pi - theta.
    """
    nt = u.grid.ntheta
    if nt % 2:
        raise ValueError("polarization needs an even number of angular nodes")
    vals = u.values
    refl = vals[:, ::-1]
    out = np.empty_like(vals)
    h = nt // 2
    out[:, :h] = np.maximum(vals[:, :h], refl[:, :h])
    out[:, h:] = np.minimum(vals[:, h:], refl[:, h:])
    return Field(out, u.grid)


@dataclass
class SymmetryReport:
    theta_monotone_defect: float
    polarization_energy_gap: float
    invariance_gaps: dict = field(default_factory=dict)
    relative_gaps: dict = field(default_factory=dict)
    polarization_distance: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def polarization_invariants(u: Field, spec: ProblemSpec, weights: Weights | None, op: Operator | None,
                            e1: Field) -> SymmetryReport:
    """Gaps |Q(u_K) - Q(u)| for the Dirichlet energy, L^2 and L^p norms and the two e_1 moments."""
    weights = u.grid.weights if weights is None else weights
    uk = polarize_equatorial(u)
    p = spec.crit_exp

    def quantities(f):
        return {
            "dirichlet": h_inner(f, f, weights),
            "l2": weighted_power_integral(f, 2.0, 0.0, weights),
            "lcrit": weighted_power_integral(f, p, 0.0, weights),
            "e1": integrate(Field(f.values * e1.values, f.grid), weights),
            "weighted_e1": integrate(
                Field(f.grid.r[:, None] ** spec.alpha * np.abs(f.values) ** (p - 2) * f.values
                      * e1.values, f.grid), weights),
        }

    q, qk = quantities(u), quantities(uk)
    gaps = {key: abs(qk[key] - q[key]) for key in q}
    rel = {key: gaps[key] / max(abs(q[key]), np.finfo(float).tiny) for key in q}
    e_gap = abs(energy(uk, spec, weights).phi - energy(u, spec, weights).phi)
    return SymmetryReport(
        theta_monotone_defect=theta_monotonicity(u),
        polarization_energy_gap=e_gap,
        invariance_gaps=gaps,
        relative_gaps=rel,
        polarization_distance=float(np.max(np.abs(uk.values - u.values))),
    )


def theta_monotonicity(u: Field) -> float:
    """Largest total angular increase over radial slices, in the better of the two orientations."""
    diffs = np.diff(u.values, axis=1)
    dec = float(np.max(np.sum(np.maximum(diffs, 0.0), axis=1)))
    inc = float(np.max(np.sum(np.maximum(-diffs, 0.0), axis=1)))
    return min(dec, inc)


def orient(u: Field) -> Field:
    """Reflect u if its maximum lies on the theta > pi/2 side, so the axis points to the max."""
    i, j = np.unravel_index(np.argmax(u.values), u.values.shape)
    if u.grid.theta[j] > np.pi / 2:
        return Field(u.values[:, ::-1].copy(), u.grid)
    return u
