"""Time one standard half-cycle of idle RK4 propagation with each kernel backend.

    python benchmarks/bench_rk4.py [--n-fock 25 50 100] [--repeat 3]
"""
import argparse
import time

import numpy as np

from gkpqec import _kernels_py
from gkpqec.fock import HilbertConfig
from gkpqec.lindblad import HamiltonianParams, IntegratorConfig, NoiseModel, build_generator, step_plan

try:
    from gkpqec import _kernels
except ImportError:
    _kernels = None


def bench(mod, rho, gen, h, n, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = mod.rk4_propagate(rho, gen.diag, gen.shifts, gen.coefs, h, n, True)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-fock", type=int, nargs="+", default=[25, 50, 100])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--duration", type=float, default=0.5, help="in cycle units")
    args = ap.parse_args()
    noise = NoiseModel.preset("high")
    dt = IntegratorConfig().dt
    print(f"{'n_fock':>6} {'steps':>6} {'python_s':>10} {'cython_s':>10} {'speedup':>8} {'max_diff':>10}")
    for n_fock in args.n_fock:
        d = 2 * n_fock
        gen = build_generator(noise, HamiltonianParams(), HilbertConfig(n_fock))
        plan = step_plan(args.duration, dt)
        h, n = plan[0]
        rng = np.random.default_rng(0)
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        tp, op = bench(_kernels_py, rho, gen, h, n, args.repeat)
        if _kernels is None:
            print(f"{n_fock:>6} {n:>6} {tp:>10.3f} {'n/a':>10}")
            continue
        tc, oc = bench(_kernels, rho, gen, h, n, args.repeat)
        print(f"{n_fock:>6} {n:>6} {tp:>10.3f} {tc:>10.3f} {tp / tc:>8.1f} {np.abs(op - oc).max():>10.2e}")


if __name__ == "__main__":
    main()
