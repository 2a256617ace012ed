"""Time the compiled and pure-Python kernels on the 50x50, 360-view scene.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from occtomo import _backend
from occtomo.grid import make_grid, parallel_views
from occtomo.operators import trace_views
from occtomo.phantoms import five_circles


def bench(backend, repeat):
    k = _backend.load(backend)
    grid = make_grid(50, 50)
    views = parallel_views(grid, 360, 0.0, 1.0, 50)
    x0, y0 = grid.origin
    cols = [np.ascontiguousarray(c, dtype=float) for c in (*views.ray_a.T, *views.ray_b.T)]
    args = (*cols, grid.nx, grid.ny, float(x0), float(y0), float(grid.pixel_size))
    t = trace_views(grid, views, "binary")
    x = five_circles(grid)
    rng = np.random.default_rng(0)
    la, ls = np.log(x.a), np.log(x.s)
    tau = k.ray_tau(t.indptr, t.pixels, t.weight, t.expo, t.own, la, ls)
    ra, rs = rng.standard_normal(grid.n_pixels), rng.standard_normal(grid.n_pixels)
    w = rng.standard_normal(t.n_rays)
    cases = {
        "trace_batch": lambda: k.trace_batch(*args),
        "ray_tau": lambda: k.ray_tau(t.indptr, t.pixels, t.weight, t.expo, t.own, la, ls),
        "ray_sum": lambda: k.ray_sum(t.indptr, tau),
        "ray_jvp": lambda: k.ray_jvp(t.indptr, t.pixels, t.expo, t.own, tau, ra, rs),
        "ray_vjp": lambda: k.ray_vjp(t.indptr, t.pixels, t.expo, t.own, tau, w, grid.n_pixels),
    }
    return {name: min(timeit.repeat(fn, number=1, repeat=repeat)) for name, fn in cases.items()}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _backend.available()
    results = {b: bench(b, args.repeat) for b in backends}
    names = list(next(iter(results.values())))
    print(f"{'kernel':<12}" + "".join(f"{b + ' (ms)':>16}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for n in names:
        row = f"{n:<12}" + "".join(f"{1e3 * results[b][n]:>16.2f}" for b in backends)
        if len(backends) > 1:
            row += f"{results['python'][n] / results['cython'][n]:>10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
