"""One-call construction of grid, operator, spectrum and split."""
from __future__ import annotations

from dataclasses import dataclass

from .grid import Grid, ProblemSpec, build_grid
from .spectral import (Operator, Spectrum, SubspaceSplit,
                       assemble_operator, dirichlet_spectrum, split_space)


@dataclass(eq=False)
class Problem:
    spec: ProblemSpec
    grid: Grid
    op: Operator
    spectrum: Spectrum
    split: SubspaceSplit

    @property
    def weights(self):
        return self.grid.weights

    def with_spec(self, spec: ProblemSpec) -> "Problem":
        """Same discretisation, new lambda/alpha (N must match)."""
        if spec.N != self.spec.N:
            raise ValueError("dimension change needs a new grid")
        spectrum = _enough_spectrum(self.op, spec.lam, self.spectrum)
        return Problem(spec, self.grid, self.op, spectrum, split_space(spec, spectrum))


def _enough_spectrum(op, lam, spectrum=None, k=4):
    while spectrum is None or spectrum.eigvals[-1] <= lam * (1 + 1e-8):
        k = k if spectrum is None else 2 * len(spectrum)
        spectrum = dirichlet_spectrum(op, k)
    return spectrum


def setup_problem(spec: ProblemSpec, nr: int = 256, ntheta: int = 64, k: int = 4) -> Problem:
    grid = build_grid(spec, nr, ntheta)
    op = assemble_operator(grid)
    spectrum = _enough_spectrum(op, spec.lam, k=k)
    return Problem(spec, grid, op, spectrum, split_space(spec, spectrum))
