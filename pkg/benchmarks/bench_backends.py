"""Timing comparison of the two kernel backends.

Runs the forward (batch_logits) and backward (scatter_grad) sparse kernels
on synthetic workloads sized like real training batches, checks that the
numba and pure-numpy paths agree numerically, and prints a throughput table.

Usage:
    python benchmarks/bench_backends.py [--rows 128] [--repeats 20]
"""

import argparse
import time

import numpy as np

from affectcl.features import FeatureVector, stack_features
from affectcl.kernels import numba_backend, numpy_backend


def make_batch(rng, n_rows, dim, nnz_range=(5, 60)):
    rows = []
    for _ in range(n_rows):
        nnz = int(rng.integers(*nnz_range))
        idx = np.sort(rng.choice(dim, size=nnz, replace=False)).astype(np.int64)
        rows.append(FeatureVector(indices=idx, values=rng.normal(size=nnz),
                                  dim=dim))
    return stack_features(rows)


def bench(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=128)
    parser.add_argument("--slots", type=int, default=6)
    parser.add_argument("--arity", type=int, default=4)
    parser.add_argument("--dim", type=int, default=1 << 16)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    batch = make_batch(rng, args.rows, args.dim)
    weights = rng.normal(size=(args.slots, args.arity, args.dim))
    coef = rng.normal(size=(args.rows, args.slots, args.arity))

    # correctness first: both backends must agree to float64 roundoff
    ref = numpy_backend.batch_logits(weights, batch.indptr, batch.indices,
                                     batch.values)
    jit = numba_backend.batch_logits(weights, batch.indptr, batch.indices,
                                     batch.values)
    np.testing.assert_allclose(ref, jit, atol=1e-12)
    g_ref = np.zeros_like(weights)
    g_jit = np.zeros_like(weights)
    numpy_backend.scatter_grad(g_ref, coef, batch.indptr, batch.indices,
                               batch.values)
    numba_backend.scatter_grad(g_jit, coef, batch.indptr, batch.indices,
                               batch.values)
    np.testing.assert_allclose(g_ref, g_jit, atol=1e-12)
    print("backends agree (atol 1e-12)")

    results = []
    for name, backend in (("numpy", numpy_backend), ("numba", numba_backend)):
        t_fwd = bench(lambda: backend.batch_logits(
            weights, batch.indptr, batch.indices, batch.values), args.repeats)
        grad = np.zeros_like(weights)
        t_bwd = bench(lambda: backend.scatter_grad(
            grad, coef, batch.indptr, batch.indices, batch.values),
            args.repeats)
        results.append((name, t_fwd, t_bwd))

    print(f"\nbatch of {args.rows} rows, {args.slots}x{args.arity} slots, "
          f"dim {args.dim} (best of {args.repeats})")
    print(f"{'backend':<8} {'forward':>12} {'backward':>12}")
    for name, t_fwd, t_bwd in results:
        print(f"{name:<8} {t_fwd * 1e3:>10.3f}ms {t_bwd * 1e3:>10.3f}ms")
    base_fwd, base_bwd = results[0][1], results[0][2]
    jit_fwd, jit_bwd = results[1][1], results[1][2]
    print(f"numba speedup: forward {base_fwd / jit_fwd:.1f}x, "
          f"backward {base_bwd / jit_bwd:.1f}x")


if __name__ == "__main__":
    main()
