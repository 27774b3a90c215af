"""Time the compiled and numpy kernels on desk-scale inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from rydsps import kernels


def chain_inputs(n=10_000_000):
    rng = np.random.default_rng(1)
    return rng.random(n), np.exp(-5e-6 / 65e-6), 0.019, 100


def tag_inputs(n=200_000, span_ns=50_000_000_000):
    rng = np.random.default_rng(2)
    t1 = np.sort(rng.integers(0, span_ns, n))
    t2 = np.sort(rng.integers(0, span_ns, n))
    return t1, t2, 20, 252_520


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cases = {
        "contaminant_chain (1e7 pulses)": (kernels.contaminant_chain, chain_inputs()),
        "coincidence_histogram (2x2e5 tags)": (kernels.coincidence_histogram, tag_inputs()),
    }
    print(f"{'kernel':38s} {'backend':8s} {'best s':>9s}")
    for name, (fn, inputs) in cases.items():
        results = {}
        for backend in sorted(kernels.BACKENDS):
            t = min(timeit.repeat(lambda: fn(*inputs, backend=backend), number=1, repeat=args.repeat))
            results[backend] = (t, fn(*inputs, backend=backend))
            print(f"{name:38s} {backend:8s} {t:9.4f}")
        outs = [r[1] for r in results.values()]
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        if len(results) > 1:
            speed = results["python"][0] / results["cython"][0]
            print(f"{'':38s} speedup {speed:6.1f}x, identical output: {same}")


if __name__ == "__main__":
    main()
