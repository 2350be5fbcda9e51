"""Extra-trees fit/predict timings, numba kernels vs pure numpy.

    python3 benchmarks/bench_forest.py [--rows 2000] [--features 20] [--trees 100] [--repeat 3]

Both backends grow the same trees (same seed), so the predictions should
agree to round-off; the largest difference is printed alongside the timings.
"""
import argparse
import time

import numpy as np

from soilfusion.regression import ForestParams, fit_extra_trees, predict_forest
from soilfusion.regression import _kernels

KERNELS = ("node_ranges", "best_split", "predict_trees")


def use(backend):
    for name in KERNELS:
        setattr(_kernels, name, getattr(_kernels, f"{name}_{backend}"))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.rows, args.features))
    y = np.sin(2 * X[:, 0]) + X[:, 1] * X[:, 2] + 0.1 * rng.normal(size=args.rows)
    Q = rng.normal(size=(args.rows, args.features))
    params = ForestParams(n_trees=args.trees, seed=0)

    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    preds = {}
    print(f"{args.rows} rows x {args.features} features, {args.trees} trees, best of {args.repeat}")
    print(f"{'backend':<8} {'fit s':>8} {'predict s':>10}")
    for backend in backends:
        use(backend)
        # warm-up also triggers numba compilation
        predict_forest(fit_extra_trees(X[:50], y[:50], ForestParams(n_trees=2)), Q[:5])
        t_fit, model = best_of(lambda: fit_extra_trees(X, y, params), args.repeat)
        t_pred, preds[backend] = best_of(lambda: predict_forest(model, Q), args.repeat)
        print(f"{backend:<8} {t_fit:8.3f} {t_pred:10.4f}")
    if len(preds) == 2:
        print(f"max |numba - numpy| prediction difference: {np.max(np.abs(preds['numba'] - preds['numpy'])):.2e}")


if __name__ == "__main__":
    main()
