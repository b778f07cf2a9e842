"""Time the forest kernels: compiled extension versus numpy fallback.

    python benchmarks/bench_kernels.py [--repeats 20] [--dtype float32]

Each row reports the median time of one forward (traversal) plus one
backward (gradient scatter) over a mini-batch.
"""
import argparse
import statistics
import time

import numpy as np

from hingeforest.forest import FERN, TREE, forest_backward, forest_forward, initialize_forest
from hingeforest.forest.kernels import BACKENDS

CASES = [
    # (label, batch, trees, depth, features, outputs, kind)
    ("uci", 25, 10, 5, 100, 3, TREE),
    ("uci-wide", 32, 100, 10, 100, 3, TREE),
    ("mnist-smoke", 53, 10, 5, 5120, 10, TREE),
    ("mnist", 53, 100, 10, 5120, 10, TREE),
    ("mnist-fern", 53, 100, 10, 5120, 10, FERN),
    ("mnist-1000", 53, 1000, 10, 5120, 10, TREE),
]


def time_case(backend, x, params, grad, repeats):
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        _, cache = forest_forward(x, params, backend)
        forest_backward(grad, cache, params, backend)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    args = parser.parse_args(argv)
    dtype = np.dtype(args.dtype)
    names = [n for n in ("numpy", "compiled") if n in BACKENDS]
    if "compiled" not in names:
        print("compiled extension not built; only the numpy backend is timed")
    print(f"{'case':<12} {'N':>4} {'M':>5} {'D':>3} {'kind':>5} "
          + " ".join(f"{n + ' ms':>12}" for n in names) + (f" {'speedup':>8}" if len(names) > 1 else ""))
    rng = np.random.default_rng(0)
    for label, n, m, d, f, k, kind in CASES:
        params = initialize_forest(m, d, f, k, kind, seed=rng, dtype=dtype)
        x = rng.normal(size=(n, f)).astype(dtype)
        grad = rng.normal(size=(n, m, k)).astype(dtype)
        times = [time_case(BACKENDS[name], x, params, grad, args.repeats) for name in names]
        row = f"{label:<12} {n:>4} {m:>5} {d:>3} {kind:>5} " + " ".join(f"{1e3 * t:>12.3f}" for t in times)
        if len(times) > 1:
            row += f" {times[0] / times[1]:>7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
