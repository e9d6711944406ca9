"""Compare the numba-compiled kernels with their pure-Python fallbacks.

    python benchmarks/bench_kernels.py [--repeat N] [--skip-tran]

Kernel timings swap each compiled function for its ``py_func`` in process.
The transient timing runs the CLI demo twice in subprocesses, once with
FREQDOUBLER_DISABLE_NUMBA=1, so the fallback path is exercised end to end.
"""
import argparse
import contextlib
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from freqdoubler import _jit, engine, kernels, reference

HOT = ("assemble", "lu_factor", "lu_solve", "goertzel_bin")


@contextlib.contextmanager
def fallback():
    saved = {name: getattr(kernels, name) for name in HOT}
    try:
        for name, fn in saved.items():
            setattr(kernels, name, fn.py_func)
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def newton_step(nw, x, v_val, i_val):
    nw.assemble(x, v_val, i_val, 1e-12)
    perm, _ = kernels.lu_factor(nw.jac, 1e-13)
    kernels.lu_solve(nw.jac, perm, -nw.res)


def bench(label, fn, repeat):
    fn()  # warm-up, includes JIT compilation
    number, _ = timeit.Timer(fn).autorange()
    best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    print(f"  {label:<28} {best * 1e6:12.2f} us")
    return best


def run_demo(disable):
    env = dict(os.environ)
    if disable:
        env["FREQDOUBLER_DISABLE_NUMBA"] = "1"
    else:
        env.pop("FREQDOUBLER_DISABLE_NUMBA", None)
    cmd = [sys.executable, "-m", "freqdoubler", "demo", "--out", os.devnull]
    # first run fills the numba cache
    subprocess.run(cmd, env=env, check=True, capture_output=True)
    t0 = time.perf_counter()
    subprocess.run(cmd, env=env, check=True, capture_output=True)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-tran", action="store_true")
    args = ap.parse_args()
    if not _jit.NUMBA_ENABLED:
        print("numba is not active; both columns would time the same code")
        return 1

    cc = engine._Compiled(reference.build_doubler("matched"))
    nw = engine._Newton(cc, engine.NewtonOptions())
    x = engine.solve_dc(reference.build_doubler("matched")).x.copy()
    v_val, i_val = cc.source_values(0.0), cc.i_val
    signal = np.sin(2 * np.pi * 2e3 * 1e-6 * np.arange(4000))

    cases = [
        ("assemble + LU (doubler)", lambda: newton_step(nw, x, v_val, i_val)),
        ("goertzel 4000 samples", lambda: kernels.goertzel_bin(signal, 2 * np.pi * 8 / 4000)),
    ]
    results = {}
    for mode in ("numba", "fallback"):
        print(mode)
        ctx = fallback() if mode == "fallback" else contextlib.nullcontext()
        with ctx:
            for label, fn in cases:
                results[mode, label] = bench(label, fn, args.repeat)
    print("speed-up")
    for label, _ in cases:
        print(f"  {label:<28} {results['fallback', label] / results['numba', label]:10.1f}x")

    if not args.skip_tran:
        fast, slow = run_demo(False), run_demo(True)
        print(f"demo transient (4001 steps): numba {fast:.2f} s, fallback {slow:.2f} s, {slow / fast:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
