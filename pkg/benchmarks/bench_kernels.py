"""Compare the compiled and pure-numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from invlab import _kernels_py
from invlab.model import ModelParams, uniform
from invlab.solver import make_grid, solve

try:
    from invlab import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(params, demand):
    grid = make_grid(params, demand)
    values = np.linspace(0.0, 5.0, grid.count)
    ys = grid.abscissae
    levels = solve(params, demand).policy.period_levels()
    seeds = np.arange(1, 20_001, dtype=np.uint64)

    def stage(mod):
        return lambda: mod.stage_expectation(ys, demand.grid, demand.weights, grid.x_lo, grid.h,
                                             values, params.q, params.c_h, params.c_p)

    def sim(mod):
        return lambda: mod.simulate(levels, params.x0, seeds, demand.cdf, demand.grid, params.q,
                                    params.c, params.c_h, params.c_p, False)

    def draws(mod):
        return lambda: mod.uniforms(12345, 0, 1_000_000)

    return {
        f"stage_expectation ({len(ys)} states x {len(demand.grid)} atoms)": stage,
        f"simulate (20000 paths x {params.n} periods)": sim,
        "uniforms (1e6 draws)": draws,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    params = ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.7, n=50)
    demand = uniform()
    print(f"{'kernel':<52} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for name, make in cases(params, demand).items():
        t_py = min(timeit.repeat(make(_kernels_py), number=1, repeat=args.repeat))
        if _compiled is None:
            print(f"{name:<52} {t_py:>9.4f}s {'n/a':>10}")
            continue
        t_c = min(timeit.repeat(make(_compiled), number=1, repeat=args.repeat))
        print(f"{name:<52} {t_py:>9.4f}s {t_c:>9.4f}s {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
