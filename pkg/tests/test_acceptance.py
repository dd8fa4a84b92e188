"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test prints (and the terminal summary repeats) a single PASS/FAIL line.
Run on its own with ``pytest tests/test_acceptance.py -v``.
"""
import json
import math
import time

import numpy as np
import pytest

from henon_nehari import (NehariConfig, ProblemSpec, assemble_operator, build_grid, cli,
                          dirichlet_spectrum, energy, h_gradient, h_inner, hessian_apply,
                          minimize_over_Y, morse_index, polarization_invariants, project_to_nehari,
                          sign_change, sobolev_constant)
from henon_nehari.diagnostics import orient
from henon_nehari.instanton import InstantonParams, calculus_max, loglog_slope, spike_integrals
from henon_nehari.nehari import random_smooth_field
from conftest import problem_at, record
from oracles import bracket_max, first_zero_j32, golden_section_max, grid_refine_max, sobolev_rayleigh

# frozen oracle values (see oracles.py)
PI2 = math.pi ** 2
J32_SQ = 20.19072855642663
S5 = 14.811911720005934

ALPHAS = (0.0, 0.05, 0.1)
_runs: dict = {}


def solved(lam_factor, alpha):
    """Cached 256x64 ground state at N=5: (problem, report, seconds)."""
    key = (lam_factor, alpha)
    if key not in _runs:
        prob = problem_at(5, lam_factor, alpha)
        t0 = time.perf_counter()
        rep = minimize_over_Y(prob.split, prob.spec, None, prob.op, NehariConfig())
        _runs[key] = (prob, rep, time.perf_counter() - t0)
    return _runs[key]


def converged_runs():
    return [solved(0.5, 0.0)] + [solved(1.1, a) for a in ALPHAS]


def test_frozen_oracles_reproduce():
    assert first_zero_j32() ** 2 == pytest.approx(J32_SQ, rel=1e-14)
    assert sobolev_rayleigh(5) == pytest.approx(S5, rel=1e-12)


def test_criterion_01_eigenvalues():
    t0 = time.perf_counter()
    op = assemble_operator(build_grid(ProblemSpec(3), 256, 64))
    ev = dirichlet_spectrum(op, 2).eigvals
    dt = time.perf_counter() - t0
    e1, e2 = abs(ev[0] / PI2 - 1), abs(ev[1] / J32_SQ - 1)
    ok = e1 <= 5e-3 and e2 <= 1e-2 and dt <= 30
    record(1, ok, f"lam1={ev[0]:.6f} (rel {e1:.2e}), lam2={ev[1]:.5f} (rel {e2:.2e}), {dt:.1f}s")
    assert ok


def test_criterion_02_fiber_profile_identity():
    rng = np.random.default_rng(2)
    worst = 0.0
    t0 = time.perf_counter()
    for N in (4, 5, 6):
        p = 2 * N / (N - 2)
        for A, B in rng.uniform(0.1, 10, size=(100, 2)):
            f = lambda t: 0.5 * A * t * t - B * t ** p / p
            ref = golden_section_max(f, *bracket_max(f))[1]
            worst = max(worst, abs(calculus_max(A, B, N) / ref - 1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt <= 1.0
    record(2, ok, f"max rel err {worst:.2e} over 300 cases, {dt:.2f}s")
    assert ok


def test_criterion_03_gradient_hessian_duality():
    prob = problem_at(5, 1.1, 0.1)
    spec, op = prob.spec, prob.op
    worst_g = worst_h = 0.0
    for k in range(20):
        u = random_smooth_field(prob.grid, 100 + k)
        v = random_smooth_field(prob.grid, 200 + k)
        h = 1e-4
        fd = (energy(u + v * h, spec).phi - energy(u - v * h, spec).phi) / (2 * h)
        g = h_gradient(u, spec, None, op)
        worst_g = max(worst_g, abs(h_inner(g, v) - fd) / abs(fd))
        Hv = hessian_apply(u, v, spec, None, op)
        d = (h_gradient(u + v * h, spec, None, op) - h_gradient(u - v * h, spec, None, op)) * (1 / (2 * h))
        diff = Hv - d
        worst_h = max(worst_h, math.sqrt(h_inner(diff, diff) / h_inner(Hv, Hv)))
    ok = worst_g <= 1e-5 and worst_h <= 1e-4
    record(3, ok, f"gradient rel err {worst_g:.2e}, Hessian rel err {worst_h:.2e}")
    assert ok


def test_criterion_04_classical_limit():
    prob = problem_at(5, 0.5, 0.0)
    assert prob.split.m == 0
    p = prob.spec.crit_exp
    worst = 0.0
    for k in range(50):
        v = random_smooth_field(prob.grid, 300 + k, modes=3 + k % 4)
        pt = project_to_nehari(v, prob.split, prob.spec, None, prob.op)
        e = energy(pt.v, prob.spec)
        t_star = ((e.dirichlet - prob.spec.lam * e.mass) / e.critical) ** (1 / (p - 2))
        worst = max(worst, abs(pt.f / t_star - 1))
    ok = worst <= 1e-10
    record(4, ok, f"max rel |t - t*| = {worst:.2e} over 50 directions")
    assert ok


def test_criterion_05_generalized_fiber_oracle():
    prob = problem_at(5, 1.1, 0.0)
    assert prob.split.m == 1
    e1 = prob.spectrum.eigfield(0)
    worst = 0.0
    for k in range(3):
        v = random_smooth_field(prob.grid, 400 + k)
        pt = project_to_nehari(v, prob.split, prob.spec, None, prob.op)
        vy = pt.v  # unit direction in Y
        e = energy(vy, prob.spec)
        t0 = ((e.dirichlet - prob.spec.lam * e.mass) / e.critical) ** (1 / (prob.spec.crit_exp - 2))
        phi = lambda t, s: energy(vy * t + e1 * s, prob.spec).phi
        best, _, _ = grid_refine_max(phi, (0.0, 3 * t0), (-t0, t0), n=31, levels=16)
        worst = max(worst, abs(pt.phi - best) / abs(best))
    ok = worst <= 1e-6
    record(5, ok, f"max rel phi gap vs brute force {worst:.2e}")
    assert ok


def test_criterion_06_natural_constraint():
    worst = 0.0
    details = []
    for prob, rep, _ in converged_runs():
        assert rep.converged
        g = h_gradient(rep.u, prob.spec, None, prob.op)
        scale = max(1.0, math.sqrt(h_inner(rep.u, rep.u)))
        rel = math.sqrt(h_inner(g, g)) / scale
        worst = max(worst, rel)
        details.append(f"m={prob.split.m},a={prob.spec.alpha}:{rel:.1e}")
    ok = worst <= 1e-6
    record(6, ok, "full |grad|_H/scale " + " ".join(details))
    assert ok


def test_criterion_07_threshold():
    thr = sobolev_constant(5) ** 2.5 / 5
    assert thr == pytest.approx(S5 ** 2.5 / 5, rel=1e-13)
    rows, ok = [], True
    for a in ALPHAS:
        prob, rep, dt = solved(1.1, a)
        margin = (thr - rep.level_c) / thr
        ok &= rep.converged and rep.level_c < thr and margin >= 0.01 and dt <= 600
        rows.append(f"a={a}: c={rep.level_c:.4f} margin {margin:.1%} {dt:.0f}s")
    record(7, ok, f"threshold {thr:.4f}; " + "; ".join(rows))
    assert ok


def test_criterion_08_instanton_asymptotics():
    prob = problem_at(5, 1.1, 0.0)
    lam = prob.spec.lam
    eps = np.array([0.04, 0.02, 0.01])
    out = [spike_integrals(InstantonParams.from_eps(e), 5, 0.0) for e in eps]
    p = 10 / 3
    R = np.array([(o["dirichlet"] - lam * o["mass"]) / o["critical"] ** (2 / p) for o in out])
    deficit = S5 - R
    rel = np.abs(deficit) / S5
    mass_slope = loglog_slope(eps, [o["mass"] for o in out])
    deficit_slope = loglog_slope(eps, deficit) if np.all(deficit > 0) else float("nan")
    # the Rayleigh closeness is read at the fine end of the sweep; coarser eps are reported
    ok = (rel[-1] <= 0.02 and np.all(np.diff(rel) < 0)
          and abs(deficit_slope - 2) <= 0.2 and abs(mass_slope - 2) <= 0.2)
    record(8, ok, "rel Rayleigh deficit " + ", ".join(f"{e:g}:{r:.2%}" for e, r in zip(eps, rel))
           + f"; deficit slope {deficit_slope:.3f}; mass slope {mass_slope:.3f}")
    assert ok


def test_criterion_09_sign_change():
    rows, ok = [], True
    for a in ALPHAS:
        prob, rep, _ = solved(1.1, a)
        sc = sign_change(rep.u)
        ok &= rep.converged and sc.min < 0 < sc.max and bool(sc)
        rows.append(f"a={a}: [{sc.min:.3g}, {sc.max:.3g}]")
    record(9, ok, "; ".join(rows))
    assert ok


def test_criterion_10_morse_index():
    rows, ok = [], True
    for prob, rep, _ in converged_runs():
        m = prob.split.m
        res = morse_index(orient(rep.u), prob.spec, None, prob.op, m + 3)
        ok &= res.index == m + 1 and res.ambiguous == 0
        rows.append(f"m={m},a={prob.spec.alpha}: index {res.index}")
    record(10, ok, "; ".join(rows))
    assert ok


def test_criterion_11_polarization():
    rows, ok = [], True
    for a in ALPHAS:
        prob, rep, _ = solved(1.1, a)
        u = orient(rep.u)
        sym = polarization_invariants(u, prob.spec, None, prob.op, prob.spectrum.eigfield(0))
        sup = u.sup_norm()
        phi = abs(energy(u, prob.spec).phi)
        four = max(sym.relative_gaps[k] for k in ("dirichlet", "l2", "lcrit", "weighted_e1"))
        ok &= (four <= 1e-10 and sym.invariance_gaps["e1"] <= 1e-10 * max(1.0, sup)
               and sym.polarization_energy_gap <= 1e-10 * phi
               and sym.polarization_distance <= 1e-4 * sup
               and sym.theta_monotone_defect <= 1e-4 * sup)
        rows.append(f"a={a}: gaps {four:.1e}, dist {sym.polarization_distance:.1e}, "
                    f"defect {sym.theta_monotone_defect:.1e}")
    record(11, ok, "; ".join(rows))
    assert ok


def test_criterion_12_determinism(tmp_path):
    argv = ["solve", "--dim", "5", "--lambda", "auto(1.1*l1)", "--alpha", "0.05", "--seed", "7",
            "--out", str(tmp_path)]
    reports, fields = [], []
    for _ in range(2):
        assert cli.main(argv) == 0
        d = json.loads((tmp_path / "solve_report.json").read_text(encoding="utf-8"))
        d.pop(cli.TIMESTAMP_KEY)
        reports.append(json.dumps(d, sort_keys=True))
        fields.append((tmp_path / "solution.csv").read_bytes())
    ok = reports[0] == reports[1] and fields[0] == fields[1]
    record(12, ok, "reports identical modulo timestamp" if ok else "reports differ")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
