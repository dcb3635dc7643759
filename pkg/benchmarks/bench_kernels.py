"""Benchmark: compiled kernels vs the numpy fallback.

Times the two hot paths (pairwise lambda computation, histogram split
finding), tree traversal, and a short end-to-end training run under each
backend.

    python benchmarks/bench_kernels.py [--queries 400] [--docs 50]
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from alrank import _kernels_py
from alrank import kernels as active
from alrank.gbdt import TrainConfig, train
from alrank.metrics import QueryContext

try:
    from alrank import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None

from synthetic import make_synthetic, synthetic_objectives


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lambdas(impl, queries):
    def run():
        for ctx, scores, ranks in queries:
            lam = np.zeros(len(scores))
            hess = np.zeros(len(scores))
            impl.query_lambdas(ctx.grades, ctx.gains, ranks, ctx.disc,
                               ctx.inv_idcg, scores, 1.0, lam, hess)
    return timeit(run)


def bench_cost(impl, queries):
    def run():
        total = 0.0
        for ctx, scores, ranks in queries:
            total += impl.query_cost(ctx.grades, ctx.gains, ranks, ctx.disc,
                                     ctx.inv_idcg, scores, 1.0)
    return timeit(run)


def bench_hist(impl, bins, grad, hess, idx):
    d = bins.shape[1]

    def run():
        hg = np.zeros((d, 256))
        hh = np.zeros((d, 256))
        hn = np.zeros((d, 256), dtype=np.int32)
        impl.hist_build(bins, grad, hess, idx, hg, hh, hn)
        impl.hist_best_split(hg, hh, hn, float(grad[idx].sum()),
                             float(hess[idx].sum()), len(idx), 1.0, 20)
    return timeit(run)


def bench_train(backend_impl, monkey_names, exp, cfg):
    saved = {n: getattr(active, n) for n in monkey_names}
    for n in monkey_names:
        setattr(active, n, getattr(backend_impl, n))
    try:
        t0 = time.perf_counter()
        train(exp.train, exp.primary, config=cfg)
        return time.perf_counter() - t0
    finally:
        for n, fn in saved.items():
            setattr(active, n, fn)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--queries", type=int, default=400)
    parser.add_argument("--docs", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    queries = []
    for _ in range(args.queries):
        grades = rng.integers(0, 5, args.docs).astype(np.int32)
        scores = np.ascontiguousarray(rng.normal(size=args.docs))
        ctx = QueryContext.build(grades, 10)
        queries.append((ctx, scores, ctx.ranks(scores)))

    n, d = 50_000, 20
    bins = np.ascontiguousarray(rng.integers(0, 256, (n, d)).astype(np.uint8))
    grad = rng.normal(size=n)
    hess = rng.uniform(0.1, 1.0, n)
    idx = np.arange(n, dtype=np.int32)

    from alrank import Experiment
    primary, subs = synthetic_objectives()
    exp = Experiment.prepare(make_synthetic(100, 20), primary, subs)
    cfg = TrainConfig(num_trees=30, max_leaves=15, min_docs_per_leaf=10)

    impls = [("python", _kernels_py)]
    if _kernels_cy is not None:
        impls.insert(0, ("cython", _kernels_cy))
    else:
        print("compiled kernels not built; benchmarking numpy fallback only")

    names = ("query_cost", "query_lambdas", "hist_build", "hist_best_split",
             "partition", "tree_apply")
    rows = {}
    for label, impl in impls:
        rows[label] = {
            f"lambdas ({args.queries}q x {args.docs}d)": bench_lambdas(impl, queries),
            f"cost    ({args.queries}q x {args.docs}d)": bench_cost(impl, queries),
            f"hist+split ({n} rows x {d} feats)": bench_hist(impl, bins, grad, hess, idx),
            "train 30 rounds (2000 docs)": bench_train(impl, names, exp, cfg),
        }

    benches = list(next(iter(rows.values())).keys())
    width = max(len(b) for b in benches) + 2
    header = f"{'benchmark':<{width}}" + "".join(f"{lab:>12}" for lab, _ in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for b in benches:
        line = f"{b:<{width}}"
        for lab, _ in impls:
            line += f"{rows[lab][b] * 1e3:>10.1f}ms"
        if len(impls) == 2:
            line += f"{rows['python'][b] / rows['cython'][b]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
