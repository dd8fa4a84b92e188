import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from henon_nehari import InstantonParams, build_instanton, calculus_max, instanton_report, sobolev_constant
from henon_nehari.instanton import (MAX_ELL, UnderResolvedWarning, bubble_profile, calculus_argmax,
                                    loglog_slope, spike_integrals, spike_resolved, threshold,
                                    verify_threshold)
from oracles import fiber_profile_max, sobolev_rayleigh, sphere_area_recursive

# frozen from oracles.sobolev_rayleigh
SOBOLEV = {3: 5.477904089531331, 4: 10.260398641294913, 5: 14.811911720005934, 6: 19.259456665473206}


@pytest.mark.parametrize("N", sorted(SOBOLEV))
def test_sobolev_constant(N):
    assert sobolev_constant(N) == pytest.approx(SOBOLEV[N], rel=1e-13)


def test_frozen_sobolev_values_reproduce():
    for N in (3, 5):
        assert sobolev_rayleigh(N) == pytest.approx(SOBOLEV[N], rel=1e-12)


def test_threshold_five():
    assert threshold(5) == pytest.approx(SOBOLEV[5] ** 2.5 / 5, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.sampled_from([3, 4, 5, 6, 7]))
def test_calculus_max_matches_golden_section(A, B, N):
    assert calculus_max(A, B, N) == pytest.approx(fiber_profile_max(A, B, N), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.sampled_from([4, 5, 6]))
def test_calculus_argmax_is_stationary(A, B, N):
    p = 2 * N / (N - 2)
    t = calculus_argmax(A, B, N)
    assert A * t == pytest.approx(B * t ** (p - 1), rel=1e-12)


@pytest.mark.parametrize("A,B", [(0, 1), (1, 0), (-1, 1)])
def test_calculus_max_rejects(A, B):
    with pytest.raises(ValueError):
        calculus_max(A, B, 5)


@pytest.mark.parametrize("eps,ell", [(0.01, 0.5), (0.01, 0.0), (0.2, 0.4), (0.0, 0.3)])
def test_params_validation(eps, ell):
    with pytest.raises(ValueError):
        InstantonParams(eps, ell)


def test_seed_default_caps_ell():
    p = InstantonParams.seed_default(0.1)
    assert p.ell == MAX_ELL < 0.1 ** 0.25
    assert InstantonParams.from_eps(0.01).ell == pytest.approx(0.1 ** 0.5)


def test_profile_cutoff_regions():
    par = InstantonParams(0.02, 0.4)
    d = np.array([0.0, 0.1, 0.2])
    U = (15) ** 0.75 * 0.02 ** 1.5 / (0.02 ** 2 + d * d) ** 1.5
    assert np.allclose(bubble_profile(d, par, 5), U, rtol=1e-14)
    assert np.all(bubble_profile(np.array([0.4, 0.5]), par, 5) == 0)
    mid = bubble_profile(np.array([0.3]), par, 5)
    assert 0 < mid[0] < (15) ** 0.75 * 0.02 ** 1.5 / (0.02 ** 2 + 0.09) ** 1.5


def test_profile_derivative_by_finite_difference():
    par = InstantonParams(0.05, 0.4)
    d = np.linspace(0.01, 0.39, 36)  # avoids the C^1 kink at ell/2
    h = 1e-6
    fd = (bubble_profile(d + h, par, 5) - bubble_profile(d - h, par, 5)) / (2 * h)
    assert np.allclose(bubble_profile(d, par, 5, deriv=True), fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("N", [3, 5, 6])
def test_uncut_bubble_integrals_approach_sobolev_power(N):
    out = spike_integrals(InstantonParams(1e-4, 0.45), N)
    S = SOBOLEV[N]
    assert out["critical_0"] == pytest.approx(S ** (N / 2), rel=1e-6)
    # the cutoff adds O((eps/ell)^(N-2)) to the Dirichlet energy
    assert out["dirichlet"] == pytest.approx(S ** (N / 2), rel=10 * (1e-4 / 0.45) ** (N - 2) + 1e-6)


def test_weighted_critical_integral_against_ball_coordinates():
    """Hénon weight: spike-centred quadrature vs. a 2D integral in (r, theta) about the origin."""
    N, alpha = 5, 0.7
    par = InstantonParams(0.08, 0.45)
    p = 10 / 3
    a = par.center_r
    omega = sphere_area_recursive(N - 2)

    def f(t, r):
        d = math.sqrt(max(r * r + a * a - 2 * r * a * math.cos(t), 0.0))
        return omega * r ** alpha * float(bubble_profile(d, par, N)) ** p * r ** (N - 1) * math.sin(t) ** (N - 2)

    ref = integrate.dblquad(f, a - par.ell, 1.0, 0.0, lambda r: math.pi, epsabs=0, epsrel=1e-10)[0]
    assert spike_integrals(par, N, alpha)["critical"] == pytest.approx(ref, rel=1e-7)


def test_mass_exponent_five():
    eps = np.array([1e-3, 2e-3, 4e-3])
    mass = [spike_integrals(InstantonParams(e, 0.3), 5)["mass"] for e in eps]
    assert loglog_slope(eps, mass) == pytest.approx(2.0, abs=0.02)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_loglog_slope_exact_power(k, c):
    x = np.array([0.01, 0.02, 0.04, 0.08])
    assert loglog_slope(x, c * x ** k) == pytest.approx(k, abs=1e-9)


def test_sampling_and_resolution_flag(small5):
    par = InstantonParams(0.05, 0.45)
    assert not spike_resolved(par, small5.grid)
    with pytest.warns(UnderResolvedWarning):
        u = build_instanton(par, small5.grid, small5.spec)
    assert u.is_dirichlet
    assert u.sup_norm() <= float(bubble_profile(0.0, par, 5)) + 1e-12
    # axisymmetric about theta = 0: largest values near the first angular node
    j = np.unravel_index(np.argmax(u.values), u.values.shape)[1]
    assert j == 0


def test_report_consistency(small5):
    par = InstantonParams(0.04, 0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        rep = instanton_report(par, small5.spec, small5.split, small5.grid, None, small5.op)
    p = small5.spec.crit_exp
    A = rep.dirichlet - small5.spec.lam * rep.mass
    assert rep.rayleigh == pytest.approx(A / rep.critical_alpha ** (2 / p), rel=1e-14)
    assert rep.calculus_bound == pytest.approx(calculus_max(A, rep.critical_alpha, 5), rel=1e-14)
    assert rep.projection_ok
    assert set(rep.to_dict()) >= {"eps", "ell", "fiber_max", "threshold", "below_threshold"}


def test_verify_threshold_preconditions(small5):
    with pytest.raises(ValueError):
        verify_threshold(small5.spec, small5.split, small5.grid, None, small5.op, eps_grid=[])
    with pytest.raises(ValueError):
        verify_threshold(small5.spec, small5.split, small5.grid, None, small5.op, margin=-1.0)


def test_verify_threshold_margin_monotone(small5):
    kw = dict(eps_grid=[0.04])
    a = verify_threshold(small5.spec, small5.split, small5.grid, None, small5.op, **kw)
    huge = verify_threshold(small5.spec, small5.split, small5.grid, None, small5.op, margin=1e6, **kw)
    assert not huge.holds
    if a.holds:
        assert a.witness_eps == 0.04
