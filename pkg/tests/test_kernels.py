import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from henon_nehari import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba backend disabled")


def _fiber_case(seed, k, n):
    rng = np.random.default_rng(seed)
    basis = np.ascontiguousarray(rng.standard_normal((k, n)))
    coords = rng.standard_normal(k)
    rho = rng.random(n)
    return basis, coords, rho


@needs_numba
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.integers(1, 500), st.sampled_from([3.0, 10 / 3, 4.0]))
def test_fiber_terms_backends_agree(seed, k, n, p):
    args = _fiber_case(seed, k, n) + (p,)
    v0, g0, h0 = _kernels.fiber_terms_numpy(*args)
    v1, g1, h1 = _kernels.fiber_terms_numba(*args)
    assert v1 == pytest.approx(v0, rel=1e-12)
    assert np.allclose(g1, g0, rtol=1e-11, atol=1e-11 * np.abs(g0).max())
    assert np.allclose(h1, h0, rtol=1e-11, atol=1e-11 * np.abs(h0).max())
    assert np.allclose(h1, h1.T)


@needs_numba
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 40), st.integers(2, 20))
def test_edge_form_backends_agree(seed, nr, nt):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, nr, nt))
    cr, ct = rng.random((nr - 1, nt)), rng.random((nr, nt - 1))
    a = _kernels.edge_form_numpy(u, v, cr, ct)
    b = _kernels.edge_form_numba(u, v, cr, ct)
    assert b == pytest.approx(a, rel=1e-11, abs=1e-11)


def test_fiber_terms_single_direction_closed_form():
    basis, coords, rho = _fiber_case(1, 1, 50)
    p = 10 / 3
    val, grad, hess = _kernels.fiber_terms(basis, coords, rho, p)
    u = coords[0] * basis[0]
    assert val == pytest.approx(np.sum(rho * np.abs(u) ** p), rel=1e-12)
    # one direction: c * grad = c^2 * hess = value
    assert grad[0] * coords[0] == pytest.approx(val, rel=1e-12)
    assert hess[0, 0] * coords[0] ** 2 == pytest.approx(val, rel=1e-12)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, HENON_NEHARI_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from henon_nehari import _kernels as k; print(k.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
