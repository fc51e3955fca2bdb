#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times each hot kernel on desk-scale arrays and one full integrator step per
backend.  Run after building the extension:

    python benchmarks/bench_kernels.py [--nx 64] [--nv 64] [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from pairkin import gaussian_grid, kernels, make_initial_condition
from pairkin.phase import ProfileSpec
from pairkin.solver import ModelParams, step


def time_call(fn, repeat, number=1):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_kernels(nx, nv, repeat):
    rng = np.random.default_rng(0)
    grid = gaussian_grid(1, nx, nv, 8.0)
    chi = grid.chi1.values
    w = grid.w
    h = 0.8 + 0.8 * rng.random((nx, nv))
    f = np.ascontiguousarray(h * chi)
    g = np.ascontiguousarray((0.8 + 0.8 * rng.random((nx, nv))) * chi)
    rho = np.ascontiguousarray(f @ w)
    rho_new = rho * 1.01
    lam = np.exp(-0.1 * rng.random(nx))

    cases = [
        ("relax_update", lambda impl: impl.relax_update(f.copy(), chi, rho_new, rho, lam)),
        ("entropy_sum", lambda impl: impl.entropy_sum(f, chi, w, 1.0)),
        ("d12_sum", lambda impl: impl.d12_sum(f, rho, chi, w)),
        ("d3_sum", lambda impl: impl.d3_sum(f, g, rho, rho, chi, chi, w)),
        ("weighted_dot", lambda impl: impl.weighted_dot(f, g, chi, w)),
        ("ratio_extrema", lambda impl: impl.ratio_extrema(f, chi)),
    ]

    from pairkin.kernels import _numpy
    try:
        from pairkin.kernels import _core
    except ImportError:
        _core = None

    print(f"kernel benchmark: arrays ({nx}, {nv}), best of {repeat}")
    print(f"{'kernel':<16} {'numpy':>12} {'compiled':>12} {'speedup':>9}")
    for name, call in cases:
        t_np = time_call(lambda: call(_numpy), repeat)
        if _core is not None:
            t_c = time_call(lambda: call(_core), repeat)
            print(f"{name:<16} {t_np * 1e6:>10.1f}us {t_c * 1e6:>10.1f}us {t_np / t_c:>8.2f}x")
        else:
            print(f"{name:<16} {t_np * 1e6:>10.1f}us {'(not built)':>12} {'-':>9}")


def bench_step(nx, nv, repeat):
    grid = gaussian_grid(1, nx, nv, 8.0)
    F0 = make_initial_condition(
        ProfileSpec("cosine", base=1.1, amplitude=0.5),
        ProfileSpec("cosine", base=0.9, amplitude=0.2, mode=2),
        grid, 0.5, 2.0,
    )
    params = ModelParams(1.0, 1.0)
    print(f"\nfull Strang step, best of {repeat}")
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        t = time_call(lambda: step(F0, 1e-3, params, grid), repeat)
        print(f"{backend:<10} {t * 1e6:>10.1f}us per step")
    kernels.use_backend("auto")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--nv", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    bench_kernels(args.nx, args.nv, args.repeat)
    bench_step(args.nx, args.nv, args.repeat)
