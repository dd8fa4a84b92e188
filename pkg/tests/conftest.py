import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from henon_nehari import NehariConfig, ProblemSpec, minimize_over_Y, setup_problem  # noqa: E402

# criterion id -> (passed, detail); filled by the acceptance module
CRITERIA: dict = {}


def record(cid, passed, detail=""):
    CRITERIA[cid] = (bool(passed), detail)
    print(f"criterion {cid:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(CRITERIA):
        ok, detail = CRITERIA[cid]
        terminalreporter.write_line(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


_problems: dict = {}
_states: dict = {}


def problem_at(N, lam_factor, alpha=0.0, nr=256, ntheta=64):
    """Grid problem with lambda = lam_factor * lambda_1 of that grid (cached per session)."""
    key = (N, lam_factor, alpha, nr, ntheta)
    if key not in _problems:
        base_key = (N, nr, ntheta)
        if base_key not in _problems:
            _problems[base_key] = setup_problem(ProblemSpec(N, 0.0, 0.0), nr, ntheta, k=6)
        base = _problems[base_key]
        lam = lam_factor * float(base.spectrum.eigvals[0])
        _problems[key] = base.with_spec(ProblemSpec(N, lam, alpha))
    return _problems[key]


def ground_state(N, lam_factor, alpha=0.0, nr=256, ntheta=64, **cfg):
    key = (N, lam_factor, alpha, nr, ntheta, tuple(sorted(cfg.items())))
    if key not in _states:
        prob = problem_at(N, lam_factor, alpha, nr, ntheta)
        _states[key] = minimize_over_Y(prob.split, prob.spec, None, prob.op, NehariConfig(**cfg))
    return problem_at(N, lam_factor, alpha, nr, ntheta), _states[key]


@pytest.fixture(scope="session")
def small5():
    """N=5 coarse problem, lambda = 1.1 lambda_1, alpha = 0.1."""
    return problem_at(5, 1.1, 0.1, nr=48, ntheta=16)
