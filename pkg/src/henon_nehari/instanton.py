"""Cut-off Aubin-Talenti bubbles and the energy threshold (1/N) S^(N/2).

Bubble integrals are evaluated with a quadrature centred on the spike (1D in
the distance to the spike, Gauss-Legendre in the polar angle about it), so
they do not depend on the resolution of the (r, theta) grid.  The fiber
maximum of the bubble is computed on the grid by the Nehari projection.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from math import gamma, pi

import numpy as np
from scipy import integrate as quad_integrate

from .grid import Field, Grid, ProblemSpec, Weights, sphere_area
from .nehari import NehariError, project_to_nehari
from .spectral import Operator, SubspaceSplit

log = logging.getLogger(__name__)

__all__ = [
    "InstantonParams",
    "InstantonReport",
    "ThresholdVerdict",
    "UnderResolvedWarning",
    "sobolev_constant",
    "calculus_max",
    "calculus_argmax",
    "bubble_profile",
    "spike_integrals",
    "spike_resolved",
    "build_instanton",
    "instanton_report",
    "verify_threshold",
    "loglog_slope",
    "DEFAULT_EPS_GRID",
]

DEFAULT_EPS_GRID = (0.04, 0.02, 0.01)
MAX_ELL = 0.45


class UnderResolvedWarning(UserWarning):
    pass


def sobolev_constant(N: int) -> float:
    """Best constant S = N(N-2) pi (Gamma(N/2)/Gamma(N))^(2/N)."""
    if N < 3:
        raise ValueError("N must be >= 3")
    return N * (N - 2) * pi * (gamma(N / 2) / gamma(N)) ** (2.0 / N)


def threshold(N: int) -> float:
    return sobolev_constant(N) ** (N / 2) / N


def calculus_argmax(A: float, B: float, N: int) -> float:
    p = 2.0 * N / (N - 2)
    if A <= 0 or B <= 0:
        raise ValueError("A and B must be positive")
    return (A / B) ** (1.0 / (p - 2.0))


def calculus_max(A: float, B: float, N: int) -> float:
    """max over t > 0 of A t^2 / 2 - B t^p / p with p = 2N/(N-2)."""
    if A <= 0 or B <= 0:
        raise ValueError("A and B must be positive")
    p = 2.0 * N / (N - 2)
    return (A / B ** (2.0 / p)) ** (N / 2) / N


@dataclass(frozen=True)
class InstantonParams:
    eps: float
    ell: float

    def __post_init__(self):
        if not (self.eps > 0):
            raise ValueError("eps must be positive")
        if not (0 < self.ell < 0.5):
            raise ValueError(f"ell must lie in (0, 1/2), got {self.ell}")
        if self.eps > self.ell / 4:
            raise ValueError(f"eps={self.eps} must not exceed ell/4={self.ell / 4}")

    @classmethod
    def from_eps(cls, eps: float) -> "InstantonParams":
        """ell = eps^(1/4)."""
        return cls(eps, eps ** 0.25)

    @classmethod
    def seed_default(cls, eps: float = 0.1) -> "InstantonParams":
        """Initial-guess bubble: ell = eps^(1/4) capped at MAX_ELL so the support stays inside."""
        return cls(eps, min(eps ** 0.25, MAX_ELL))

    @property
    def center_r(self) -> float:
        return 1.0 - self.ell


def _cutoff(d, ell):
    """Cubic smoothstep: 1 on d <= ell/2, 0 on d >= ell."""
    s = np.clip((np.asarray(d, dtype=float) - ell / 2) / (ell / 2), 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def _cutoff_deriv(d, ell):
    s = np.clip((np.asarray(d, dtype=float) - ell / 2) / (ell / 2), 0.0, 1.0)
    return -6.0 * s * (1.0 - s) / (ell / 2)


def bubble_profile(d, params: InstantonParams, N: int, deriv: bool = False):
    """xi(d) U(d) as a function of the distance d to the spike, or its d-derivative."""
    eps, ell = params.eps, params.ell
    d = np.asarray(d, dtype=float)
    c = (N * (N - 2)) ** ((N - 2) / 4) * eps ** ((N - 2) / 2)
    U = c * (eps * eps + d * d) ** (-(N - 2) / 2)
    if not deriv:
        return _cutoff(d, ell) * U
    dU = -(N - 2) * c * d * (eps * eps + d * d) ** (-N / 2)
    return _cutoff_deriv(d, ell) * U + _cutoff(d, ell) * dU


def _angular_weight(params: InstantonParams, N: int, alpha: float, n_gauss: int = 96):
    """A(d) = integral over the sphere |y| = d of |x_ell + y|^alpha, divided by d^(N-1)."""
    if alpha == 0:
        area = sphere_area(N - 1)
        return lambda d: area
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    psi = 0.5 * pi * (x + 1.0)
    w = 0.5 * pi * w * np.sin(psi) ** (N - 2) * sphere_area(N - 2)
    a = params.center_r
    cos_psi = np.cos(psi)

    def A(d):
        rr = a * a + d * d + 2.0 * a * d * cos_psi
        return float(np.sum(w * rr ** (alpha / 2)))

    return A


def spike_integrals(params: InstantonParams, N: int, alpha: float = 0.0) -> dict:
    """Dirichlet energy, L2 mass and critical integral of xi U over the ball.

    Returns keys ``dirichlet``, ``mass``, ``critical`` (weight |x|^alpha) and
    ``critical_0`` (alpha = 0).
    """
    eps, ell = params.eps, params.ell
    p = 2.0 * N / (N - 2)
    area = sphere_area(N - 1)
    A_alpha = _angular_weight(params, N, alpha)
    breaks = sorted({b for b in (eps, 4 * eps, 16 * eps) if b < ell / 2})
    pieces = [0.0, *breaks, ell / 2, ell]

    def radial(fn):
        total = 0.0
        for a, b in zip(pieces[:-1], pieces[1:]):
            val, _ = quad_integrate.quad(fn, a, b, epsabs=0.0, epsrel=1e-13, limit=400)
            total += val
        return total

    prof = lambda d: bubble_profile(d, params, N)
    dprof = lambda d: bubble_profile(d, params, N, deriv=True)
    out = {
        "dirichlet": area * radial(lambda d: dprof(d) ** 2 * d ** (N - 1)),
        "mass": area * radial(lambda d: prof(d) ** 2 * d ** (N - 1)),
        "critical_0": area * radial(lambda d: prof(d) ** p * d ** (N - 1)),
    }
    if alpha == 0:
        out["critical"] = out["critical_0"]
    else:
        out["critical"] = radial(lambda d: prof(d) ** p * d ** (N - 1) * A_alpha(d))
    return out


def spike_resolved(params: InstantonParams, grid: Grid) -> bool:
    """Whether both radial and angular spacings at the spike are <= eps/4."""
    h = params.eps / 4
    return grid.dr <= h and params.center_r * grid.dtheta <= h


def build_instanton(params: InstantonParams, grid: Grid, spec: ProblemSpec) -> Field:
    """Sample xi U on the grid, spike on the axis at r = 1 - ell, theta = 0."""
    a = params.center_r
    if not spike_resolved(params, grid):
        warnings.warn(
            f"grid spacing (dr={grid.dr:.3g}, r dtheta={a * grid.dtheta:.3g}) does not "
            f"resolve eps={params.eps:g}", UnderResolvedWarning, stacklevel=2)

    def fn(R, T):
        d2 = R * R + a * a - 2.0 * R * a * np.cos(T)
        return bubble_profile(np.sqrt(np.maximum(d2, 0.0)), params, spec.N)

    return Field.from_function(fn, grid)


@dataclass
class InstantonReport:
    eps: float
    ell: float
    dirichlet: float
    mass: float
    critical_alpha: float
    critical_0: float
    rayleigh: float
    calculus_bound: float
    fiber_max: float
    threshold: float
    grid_resolved: bool
    projection_ok: bool = True

    @property
    def below_threshold(self) -> bool:
        return self.projection_ok and self.fiber_max < self.threshold

    def to_dict(self) -> dict:
        d = asdict(self)
        d["below_threshold"] = self.below_threshold
        return d


CSV_COLUMNS = ("eps", "ell", "dirichlet", "mass", "critical_alpha", "critical_0", "rayleigh",
               "fiber_max", "threshold")


def instanton_report(params: InstantonParams, spec: ProblemSpec, split: SubspaceSplit, grid: Grid,
                     weights: Weights | None, op: Operator, tol: float = 1e-9) -> InstantonReport:
    N = spec.N
    ints = spike_integrals(params, N, spec.alpha)
    p = spec.crit_exp
    A = ints["dirichlet"] - spec.lam * ints["mass"]
    rayleigh = A / ints["critical"] ** (2.0 / p)
    bound = calculus_max(A, ints["critical"], N) if A > 0 else float("nan")
    resolved = spike_resolved(params, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        u = build_instanton(params, grid, spec)
    ok = True
    try:
        fmax = project_to_nehari(u, split, spec, weights, op, tol=tol).phi
    except NehariError as exc:
        log.warning("fiber projection failed for eps=%g: %s", params.eps, exc)
        fmax, ok = float("nan"), False
    return InstantonReport(
        eps=params.eps, ell=params.ell, dirichlet=ints["dirichlet"], mass=ints["mass"],
        critical_alpha=ints["critical"], critical_0=ints["critical_0"], rayleigh=rayleigh,
        calculus_bound=bound, fiber_max=fmax, threshold=threshold(N), grid_resolved=resolved,
        projection_ok=ok,
    )


@dataclass
class ThresholdVerdict:
    holds: bool
    witness_eps: float | None
    margin: float
    reports: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"holds": self.holds, "witness_eps": self.witness_eps, "margin": self.margin,
                "reports": [r.to_dict() for r in self.reports]}


def verify_threshold(spec: ProblemSpec, split: SubspaceSplit, grid: Grid, weights: Weights | None,
                     op: Operator, eps_grid=DEFAULT_EPS_GRID, margin: float = 0.0) -> ThresholdVerdict:
    """True iff some eps gives a fiber maximum below threshold - margin."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    eps_grid = list(eps_grid)
    if not eps_grid:
        raise ValueError("eps grid is empty")
    if spec.N == 4:
        log.info("N = 4: bubble mass behaves like eps^2 |log eps|; slope fits are not performed")
    reports = [instanton_report(InstantonParams.from_eps(e), spec, split, grid, weights, op)
               for e in eps_grid]
    witness = None
    for rep in reports:
        if rep.projection_ok and rep.fiber_max < rep.threshold - margin:
            if witness is None or rep.fiber_max < witness[1]:
                witness = (rep.eps, rep.fiber_max)
    return ThresholdVerdict(holds=witness is not None,
                            witness_eps=None if witness is None else witness[0],
                            margin=margin, reports=reports)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
