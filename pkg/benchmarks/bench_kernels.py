"""Compiled kernels against the numpy fallback, per kernel and per full time step.

    python3 benchmarks/bench_kernels.py [--n 32 64] [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel for both
implementations and of ten steps of the coupled evolution.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from maxlor import _kernels_py, kernels
from maxlor.charge import reference_profile
from maxlor.dynamics import WaveRotation, evolve
from maxlor.fields import FourierGrid
from maxlor.soliton import SolitonParams, rho_hat_grid, soliton_state

try:
    from maxlor import _kernels as compiled
except ImportError:
    compiled = None

KERNELS = ("coupling_pairings", "transverse_source", "rotate", "lawson_combine")


def best_of(func, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def kernel_calls(grid: FourierGrid, impl):
    rng = np.random.default_rng(0)
    rhat = np.ascontiguousarray(rho_hat_grid(reference_profile(), grid))
    phases = tuple(np.exp(1j * grid.k1d[i] * 0.3) for i in range(3))
    e = rng.normal(size=(3,) + grid.shape) + 1j * rng.normal(size=(3,) + grid.shape)
    a = rng.normal(size=(3,) + grid.shape) + 1j * rng.normal(size=(3,) + grid.shape)
    rot = WaveRotation(grid, 0.01, (0.3, 0.0, 0.0)).factors
    half = WaveRotation(grid, 0.005, (0.3, 0.0, 0.0)).factors
    weight = np.ascontiguousarray(grid.weight)
    inv_k2 = np.ascontiguousarray(grid.inv_k2)
    return {
        "coupling_pairings": lambda: impl.coupling_pairings(rhat, *phases, weight, *grid.k1d, a),
        "transverse_source": lambda: impl.transverse_source(rhat, *phases, *grid.k1d, inv_k2,
                                                            np.array([0.3, 0.0, 0.0]), -1.0),
        "rotate": lambda: impl.rotate(*rot, e, a),
        "lawson_combine": lambda: impl.lawson_combine(rot, e, a, 0.3, e, half, 0.7, a, e, 0.2, a),
    }


def step_time(grid: FourierGrid, impl, repeat: int) -> float:
    rho = reference_profile()
    y0 = soliton_state(rho, SolitonParams.of((0.0, 0.0, 0.0), (0.3, 0.0, 0.0)), grid)
    saved = {name: getattr(kernels, name) for name in KERNELS}
    try:
        for name in KERNELS:
            setattr(kernels, name, getattr(impl, name))
        return best_of(lambda: evolve(rho, y0, grid, 0.1, dt=0.01, check_wrap=False), repeat)
    finally:
        for name, func in saved.items():
            setattr(kernels, name, func)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, nargs="+", default=[32, 64])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    impls = [("numpy", _kernels_py)] + ([("compiled", compiled)] if compiled is not None else [])
    if compiled is None:
        print("compiled extension not built; timing the numpy kernels only")
    for n in args.n:
        grid = FourierGrid(n, n / 2.0)
        print(f"\nn = {n}")
        print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in impls) + ("     speedup" if compiled else ""))
        calls = {name: kernel_calls(grid, impl) for name, impl in impls}
        rows = [(k, [best_of(calls[name][k], args.repeat) for name, _ in impls]) for k in KERNELS]
        rows.append(("10 steps", [step_time(grid, impl, max(1, args.repeat // 2)) for _, impl in impls]))
        for label, times in rows:
            line = f"{label:<20}" + "".join(f"{1e3 * t:10.2f}ms" for t in times)
            if len(times) == 2:
                line += f"{times[0] / times[1]:11.2f}x"
            print(line)


if __name__ == "__main__":
    main()
