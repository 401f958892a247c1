"""Time the numba and numpy value-iteration kernels on generated layouts.

Usage: python3 benchmarks/bench_value_iteration.py [--sizes 25 49 100] [--repeat 3]
"""

import argparse
import time

import numpy as np

from deceptive_mdp import _accel
from deceptive_mdp.layouts import LayoutSpec, generate_layout
from deceptive_mdp.mdp import Mdp
from deceptive_mdp.solver import bellman_problem


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[25, 49, 100])
    p.add_argument("--family", default="random-dense")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'size':>6} {'sweeps':>7} {'numpy s':>9} {'numba s':>9} {'speedup':>8} identical")
    for n in args.sizes:
        grid = generate_layout(LayoutSpec(args.family, n, n, seed=1))
        v0, nxt, rew, frozen = bellman_problem(Mdp.from_map(grid), 0)
        solve_args = (v0, nxt, rew, 1.0, frozen, 1e-6, 100_000)
        _accel.solve_numba(*solve_args)  # compile outside the timed region
        t_np, (v_np, sweeps, _) = best_of(lambda: _accel.solve_numpy(*solve_args), args.repeat)
        t_nb, (v_nb, _, _) = best_of(lambda: _accel.solve_numba(*solve_args), args.repeat)
        same = np.array_equal(v_np, v_nb)
        print(f"{n:>6} {sweeps:>7} {t_np:>9.4f} {t_nb:>9.4f} {t_np / t_nb:>7.1f}x {same}")


if __name__ == "__main__":
    main()
