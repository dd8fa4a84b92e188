"""Compare the numba kernels with their numpy fallbacks.

Kernel timings run both backends in one process.  The end-to-end timing runs
a full ground-state solve twice in subprocesses, once with
HENON_NEHARI_DISABLE_NUMBA=1.

    python benchmarks/bench_kernels.py [--nr 256 --ntheta 64 --repeat 200 --solve]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from henon_nehari import ProblemSpec, _kernels, build_grid

SOLVE_SNIPPET = """
import time
from henon_nehari import NehariConfig, ProblemSpec, minimize_over_Y, setup_problem
from henon_nehari._kernels import backend
prob = setup_problem(ProblemSpec(5, 0.0, 0.05), {nr}, {nt})
prob = prob.with_spec(ProblemSpec(5, 1.1 * prob.spectrum.eigvals[0], 0.05))
minimize_over_Y(prob.split, prob.spec, None, prob.op, NehariConfig(max_iter=2))  # warm-up
t0 = time.perf_counter()
rep = minimize_over_Y(prob.split, prob.spec, None, prob.op, NehariConfig())
print(backend(), time.perf_counter() - t0, repr(rep.level_c))
"""


def bench(fn, args, repeat):
    fn(*args)  # warm-up (JIT compile on first call)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nr", type=int, default=256)
    ap.add_argument("--ntheta", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--solve", action="store_true", help="also time a full solve per backend")
    args = ap.parse_args()

    if not _kernels.HAS_NUMBA:
        sys.exit("numba backend unavailable (unset HENON_NEHARI_DISABLE_NUMBA)")

    g = build_grid(ProblemSpec(5), args.nr, args.ntheta)
    rng = np.random.default_rng(0)
    n = (g.nr - 1) * g.ntheta
    basis = np.ascontiguousarray(rng.standard_normal((2, n)))
    coords = np.array([1.3, -0.2])
    rho = rng.random(n)
    u, v = rng.standard_normal((2, *g.shape))
    w = g.weights

    rows = [
        ("fiber_terms (m=1)", _kernels.fiber_terms_numpy, _kernels.fiber_terms_numba, (basis, coords, rho, 10 / 3)),
        ("edge_form", _kernels.edge_form_numpy, _kernels.edge_form_numba, (u, v, w.cr, w.ct)),
    ]
    print(f"grid {args.nr}x{args.ntheta}, best of {args.repeat}")
    print(f"{'kernel':<20}{'numpy [us]':>12}{'numba [us]':>12}{'speedup':>10}")
    for name, f_np, f_nb, a in rows:
        t_np, t_nb = bench(f_np, a, args.repeat), bench(f_nb, a, args.repeat)
        print(f"{name:<20}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>10.2f}")

    if args.solve:
        code = SOLVE_SNIPPET.format(nr=args.nr, nt=args.ntheta)
        for flag in ("0", "1"):
            env = dict(os.environ, HENON_NEHARI_DISABLE_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                 check=True).stdout.split()
            print(f"solve [{out[0]}]: {float(out[1]):.2f}s  level_c={out[2]}")


if __name__ == "__main__":
    main()
