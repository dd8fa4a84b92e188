"""Ground states of -Lap u = lam u + |x|^alpha |u|^(2*-2) u on the unit ball."""
from .grid import (Field, Grid, ProblemSpec, Weights, build_grid, h_inner, integrate,
                   read_field_csv, weighted_power_integral, write_field_csv)
from .spectral import (Operator, Spectrum, SubspaceSplit, assemble_operator, dirichlet_spectrum,
                       project_Z, split_space)
from .functional import EnergyBreakdown, constraint_F, energy, h_gradient, hessian_apply
from .nehari import (GroundStateReport, NehariConfig, NehariPoint, level_c, minimize_over_Y,
                     project_to_nehari)
from .instanton import (InstantonParams, build_instanton, calculus_max, instanton_report,
                        sobolev_constant, verify_threshold)
from .diagnostics import (morse_index, polarization_invariants, polarize_equatorial, sign_change,
                          theta_monotonicity)
from .setup import Problem, setup_problem

__version__ = "0.1.0"
