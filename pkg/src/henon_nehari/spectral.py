"""Reduced Dirichlet Laplacian, its low spectrum and the split H = Z + Y."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .grid import Field, Grid, GridMismatchError, ProblemSpec, Weights

log = logging.getLogger(__name__)

__all__ = [
    "Operator",
    "Spectrum",
    "SubspaceSplit",
    "SpectralError",
    "InsufficientSpectrumError",
    "assemble_operator",
    "dirichlet_spectrum",
    "split_space",
    "project_Z",
    "TIE_RTOL",
]

#: lambda counts as equal to lambda_m when |lambda - lambda_m| <= TIE_RTOL * lambda_m
TIE_RTOL = 1e-8


class SpectralError(RuntimeError):
    pass


class InsufficientSpectrumError(ValueError):
    """Raised when the computed spectrum cannot bracket lambda; request more pairs."""


class Operator:
    """Reduced -Lap with Dirichlet data at r = 1, acting on interior unknowns.

    ``stiffness`` is the matrix of the discrete Dirichlet form and ``mass`` the
    diagonal of node weights, so -Lap = diag(mass)^-1 stiffness.  A sparse LU
    factorisation of the stiffness matrix is kept for Poisson solves.
    """

    def __init__(self, grid: Grid, stiffness: sp.csc_matrix, mass: np.ndarray):
        self.grid = grid
        self.stiffness = stiffness
        self.mass = mass
        self._lu = splu(stiffness, permc_spec="MMD_AT_PLUS_A")
        self.bandwidth = int(grid.ntheta)

    @property
    def n(self) -> int:
        return self.mass.size

    def apply(self, u: Field) -> Field:
        """-Lap u as a field (weighted-L2 self-adjoint)."""
        self._check(u)
        return Field.from_interior(self.stiffness @ u.interior() / self.mass, self.grid)

    def solve(self, b: np.ndarray, refine: bool = True) -> np.ndarray:
        """Solve stiffness @ x = b for interior vectors (one refinement step by default)."""
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if refine:
            x += self._lu.solve(b - self.stiffness @ x)
        return x

    def poisson(self, f: Field) -> Field:
        """(-Lap)^-1 f with homogeneous Dirichlet data."""
        self._check(f)
        return Field.from_interior(self.solve(self.mass * f.interior()), self.grid)

    def h_norm2(self, x: np.ndarray) -> float:
        return float(x @ (self.stiffness @ x))

    def _check(self, u: Field):
        if not u.grid.same_as(self.grid):
            raise GridMismatchError("field and operator live on different grids")


def assemble_operator(grid: Grid, weights: Weights | None = None) -> Operator:
    weights = grid.weights if weights is None else weights
    nr, nt = grid.shape
    ni = nr - 1
    idx = np.arange(ni * nt).reshape(ni, nt)
    diag = np.zeros((ni, nt))

    # radial edges between interior rows; the edge into the boundary row only
    # contributes to the diagonal
    cr = weights.cr
    diag[:-1, :] += cr[: ni - 1]
    diag[1:, :] += cr[: ni - 1]
    diag[-1, :] += cr[ni - 1]
    ct = weights.ct[:ni]
    diag[:, :-1] += ct
    diag[:, 1:] += ct

    rows = [idx.ravel(), idx[:-1].ravel(), idx[1:].ravel(), idx[:, :-1].ravel(), idx[:, 1:].ravel()]
    cols = [idx.ravel(), idx[1:].ravel(), idx[:-1].ravel(), idx[:, 1:].ravel(), idx[:, :-1].ravel()]
    vals = [diag.ravel(), -cr[: ni - 1].ravel(), -cr[: ni - 1].ravel(), -ct.ravel(), -ct.ravel()]
    K = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ni * nt, ni * nt),
    )
    K.sum_duplicates()
    mass = grid.interior(weights.w).copy()
    return Operator(grid, K, mass)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues and L2-orthonormal eigenvectors (interior, one per row)."""

    eigvals: np.ndarray
    eigvecs: np.ndarray
    grid: Grid
    residuals: np.ndarray

    def __len__(self):
        return len(self.eigvals)

    def eigfield(self, j: int) -> Field:
        """Eigenfield j (0-based: eigfield(0) is e_1)."""
        return Field.from_interior(self.eigvecs[j], self.grid)


def _parity_clean(vec: np.ndarray, grid: Grid) -> np.ndarray:
    """Project an eigenvector onto its exact theta-reflection parity class."""
    V = vec.reshape(grid.nr - 1, grid.ntheta)
    R = V[:, ::-1]
    even = 0.5 * (V + R)
    odd = 0.5 * (V - R)
    ne, no = np.linalg.norm(even), np.linalg.norm(odd)
    if no <= 1e-6 * ne:
        return even.ravel()
    if ne <= 1e-6 * no:
        return odd.ravel()
    return vec


def dirichlet_spectrum(op: Operator, k: int, tol: float = 1e-9, seed: int = 0,
                       maxiter: int | None = None) -> Spectrum:
    """Lowest ``k`` eigenpairs of the reduced Dirichlet Laplacian.

    Uses shift-invert Lanczos about 0 with the cached factorisation; the
    start vector is drawn from ``seed`` so runs are reproducible.
    """
    n = op.n
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > max(1, n // 4):
        raise ValueError(f"k={k} is too large for a grid with {n} unknowns")
    v0 = np.random.default_rng(seed).standard_normal(n)
    opinv = LinearOperator((n, n), matvec=op.solve, dtype=float)
    M = sp.diags(op.mass).tocsc()
    try:
        vals, vecs = eigsh(op.stiffness, k=k, M=M, sigma=0.0, which="LM", OPinv=opinv,
                           v0=v0, tol=1e-14, maxiter=maxiter)
    except ArpackNoConvergence as exc:
        raise SpectralError(
            f"eigensolver did not converge ({len(exc.eigenvalues)} of {k} pairs, "
            f"maxiter={maxiter or 10 * n})"
        ) from exc

    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order].T.copy()
    for j in range(k):
        vecs[j] = _parity_clean(vecs[j], op.grid)
    # M-orthonormalise (modified Gram-Schmidt) and fix signs
    for j in range(k):
        for i in range(j):
            vecs[j] -= (vecs[i] @ (op.mass * vecs[j])) * vecs[i]
        vecs[j] /= np.sqrt(vecs[j] @ (op.mass * vecs[j]))
        imax = int(np.argmax(np.abs(vecs[j])))
        if vecs[j][imax] < 0:
            vecs[j] = -vecs[j]
    vals = np.array([op.h_norm2(e) for e in vecs])
    resid = np.array([
        np.sqrt(np.sum((op.stiffness @ e - lam * op.mass * e) ** 2 / op.mass))
        for lam, e in zip(vals, vecs)
    ])
    bad = resid > tol * vals
    if np.any(bad):
        raise SpectralError(f"eigenpair residuals {resid[bad]} exceed tol*lambda")
    if vals[0] <= 0:
        raise SpectralError("first eigenvalue is not positive")
    return Spectrum(eigvals=vals, eigvecs=vecs, grid=op.grid, residuals=resid)


@dataclass(frozen=True, eq=False)
class SubspaceSplit:
    """Z = span of the first m eigenfields (L2-orthonormal rows of ``basis``)."""

    m: int
    basis: np.ndarray
    eigvals: np.ndarray
    lam: float
    next_eigval: float

    @property
    def Z_basis(self):
        return self.basis


def split_space(spec: ProblemSpec, spectrum: Spectrum) -> SubspaceSplit:
    """Count eigenvalues <= lambda (ties within TIE_RTOL go into Z)."""
    lam = spec.lam
    ev = spectrum.eigvals
    in_Z = ev <= lam + TIE_RTOL * ev
    if np.all(in_Z):
        raise InsufficientSpectrumError(
            f"all {len(ev)} computed eigenvalues are <= lambda={lam}; request more eigenpairs"
        )
    if spec.N == 4:
        close = np.abs(ev - lam) <= TIE_RTOL * ev
        if np.any(close):
            raise ValueError(
                f"N=4 requires lambda outside the Dirichlet spectrum; lambda={lam} "
                f"matches eigenvalue {ev[close][0]}"
            )
    m = int(np.sum(in_Z))
    return SubspaceSplit(m=m, basis=spectrum.eigvecs[:m].copy(), eigvals=ev[:m].copy(),
                         lam=lam, next_eigval=float(ev[m]))


def project_Z(u: Field, split: SubspaceSplit, weights: Weights | None = None) -> np.ndarray:
    """Coordinates c_j = integral(u e_j) of the H-orthogonal projection onto Z."""
    weights = u.grid.weights if weights is None else weights
    if split.m == 0:
        return np.zeros(0)
    x = u.interior() * u.grid.interior(weights.w)
    return split.basis @ x
