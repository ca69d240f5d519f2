"""Time the compiled sweep kernels against the pure-Python fallback.

Builds one long tape (a deep elementary-op chain over a handful of inputs),
then measures forward/reverse sweeps and value refreshes through both
backends on identical data.

    python benchmarks/sweep_backends.py [--nodes 200000] [--reps 5]
"""

import argparse
import statistics
import time

import numpy as np

from implicitad import backend, cos, exp, record_program, sin
from implicitad.tape import CachedTape


def build_tape(n_ops, n_in=6, seed=0):
    rng = np.random.default_rng(seed)
    ops = (
        lambda a, b: (a + b) * 0.5,
        lambda a, b: a * b * 0.3 + 0.1,
        lambda a, b: sin(a) * cos(b),
        lambda a, b: a / (b * b + 1.5),
        lambda a, b: exp(sin(a) * 0.6) - b * 0.2,
    )
    plan = [(int(rng.integers(len(ops))),
             int(rng.integers(n_in + k)),
             int(rng.integers(n_in + k)))
            for k in range(n_ops)]

    def fn(xs):
        pool = list(xs)
        for op, i, j in plan:
            pool.append(ops[op](pool[i], pool[j]))
        return pool[-3:]

    return record_program(fn, rng.normal(size=n_in)), rng


def time_callable(fn, reps):
    samples = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=200_000)
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()

    tape, rng = build_tape(args.nodes)
    off, ids, par, _, in_ids, out_ids = tape._arrays()
    n = len(tape)
    print(f"tape: {n} nodes, {ids.shape[0]} operand slots")
    names = ["python"] + (["compiled"] if backend.HAS_COMPILED else [])
    if not backend.HAS_COMPILED:
        print("note: compiled extension unavailable, timing the fallback only")

    rows = []
    fwd_seed = np.zeros(n)
    fwd_seed[in_ids] = rng.normal(size=in_ids.shape[0])
    rev_seed = np.zeros(n)
    rev_seed[out_ids] = rng.normal(size=out_ids.shape[0])
    cached = CachedTape(tape)
    new_inputs = rng.normal(size=in_ids.shape[0])

    for name in names:
        kern = backend.get_kernels(name)
        rows.append((name, "forward", time_callable(
            lambda: kern.forward_real(off, ids, par, fwd_seed.copy()), args.reps)))
        rows.append((name, "reverse", time_callable(
            lambda: kern.reverse_real(off, ids, par, rev_seed.copy()), args.reps)))
        cached.values[cached.input_ids] = new_inputs
        rows.append((name, "refresh", time_callable(
            lambda: kern.refresh_real(cached.codes, cached.offsets, cached.ids,
                                      cached.aux, cached.values, cached.partials),
            args.reps)))

    print(f"{'backend':<10} {'kernel':<8} {'median':>12} {'ns/node':>9}")
    for name, kernel, seconds in rows:
        print(f"{name:<10} {kernel:<8} {seconds * 1e3:>10.2f}ms"
              f" {seconds / n * 1e9:>8.1f}")
    if backend.HAS_COMPILED:
        for kernel in ("forward", "reverse", "refresh"):
            py = next(s for b, k, s in rows if b == "python" and k == kernel)
            cc = next(s for b, k, s in rows if b == "compiled" and k == kernel)
            print(f"speedup {kernel}: {py / cc:.1f}x")


if __name__ == "__main__":
    main()
