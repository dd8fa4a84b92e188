"""Hot per-node reductions, compiled with numba when available.

Set ``HENON_NEHARI_DISABLE_NUMBA=1`` to force the pure-numpy path.  Both
paths compute the same quantities and agree to rounding.
"""
import os

import numpy as np

DISABLE_NUMBA = os.environ.get("HENON_NEHARI_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if DISABLE_NUMBA:
        raise ImportError
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def fiber_terms_numpy(basis, coords, rho, p):
    """Nonlinear part of the fiber energy and its first two derivatives.

    With ``u = coords @ basis`` returns ``(sum rho |u|^p,
    basis @ (rho |u|^(p-2) u), basis diag(rho |u|^(p-2)) basis^T)``.
    """
    u = coords @ basis
    au = np.abs(u)
    a = rho * au ** (p - 2.0)
    value = np.sum(a * au * au)
    grad = basis @ (a * u)
    hess = (basis * a) @ basis.T
    return value, grad, hess


def edge_form_numpy(u, v, cr, ct):
    """Discrete Dirichlet form sum_e c_e (du)_e (dv)_e on the full (nr, ntheta) grid."""
    dur = u[1:, :] - u[:-1, :]
    dvr = v[1:, :] - v[:-1, :]
    dut = u[:, 1:] - u[:, :-1]
    dvt = v[:, 1:] - v[:, :-1]
    return float(np.sum(cr * dur * dvr) + np.sum(ct * dut * dvt))


if HAS_NUMBA:

    # fastmath lets LLVM reassociate the sums into SIMD lanes; inputs are
    # always finite (Field rejects NaN/inf), so the no-NaN assumption holds.
    @njit(cache=True, fastmath=True)
    def _fiber_reduce(basis, u, w):
        k, n = basis.shape
        value = 0.0
        for i in range(n):
            value += w[i] * u[i] * u[i]
        grad = np.zeros(k)
        hess = np.zeros((k, k))
        for a in range(k):
            g = 0.0
            for i in range(n):
                g += w[i] * u[i] * basis[a, i]
            grad[a] = g
            for c in range(a, k):
                h = 0.0
                for i in range(n):
                    h += w[i] * basis[a, i] * basis[c, i]
                hess[a, c] = h
                hess[c, a] = h
        return value, grad, hess

    def fiber_terms_numba(basis, coords, rho, p):
        # the elementwise power stays in numpy: its vectorised pow beats a scalar loop
        u = coords @ basis
        w = rho * np.abs(u) ** (p - 2.0)
        return _fiber_reduce(basis, u, w)

    @njit(cache=True, fastmath=True)
    def edge_form_numba(u, v, cr, ct):
        nr, nt = u.shape
        total = 0.0
        for i in range(nr - 1):
            for j in range(nt):
                total += cr[i, j] * (u[i + 1, j] - u[i, j]) * (v[i + 1, j] - v[i, j])
        for i in range(nr):
            for j in range(nt - 1):
                total += ct[i, j] * (u[i, j + 1] - u[i, j]) * (v[i, j + 1] - v[i, j])
        return total

    fiber_terms = fiber_terms_numba
    edge_form = edge_form_numba
else:
    fiber_terms_numba = None
    edge_form_numba = None
    fiber_terms = fiber_terms_numpy
    edge_form = edge_form_numpy


def backend():
    return "numba" if HAS_NUMBA else "numpy"
