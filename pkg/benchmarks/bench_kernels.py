"""Compiled kernels vs the numpy fallback on model-sized problems.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Times each model-level operation with both backends and checks that they
return the same numbers.
"""
import argparse
import time

import numpy as np

from pvbench import _fallback, kernels
from pvbench.models.knn import KnnConfig, knn_regress
from pvbench.models.qrf import QrfConfig, qrf_fit_matrix
from pvbench.models.svr import SvrConfig, svr_fit_matrix

NAMES = ("knn_query", "build_tree", "forest_apply", "forest_quantiles", "nu_svr_smo")


def use(backend):
    if backend == "cython":
        from pvbench import _kernels as impl
    else:
        impl = _fallback
    for n in NAMES:
        setattr(kernels, n, getattr(impl, n))


def problem(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 5))
    y = np.clip(0.8 * X[:, 0] - 0.1 * X[:, 0] ** 2 + 0.05 * rng.standard_normal(n), 0, 1)
    return X, y


def cases(quick):
    n_knn, n_qrf, n_svr, trees = (2000, 1000, 400, 20) if quick else (8000, 3000, 1500, 100)
    Xk, yk = problem(n_knn)
    Qk = problem(500, 1)[0]
    Xq, yq = problem(n_qrf, 2)
    Xs, ys = problem(n_svr, 3)
    qcfg = QrfConfig(n_trees=trees)
    return [
        (f"kNN k=300, n={n_knn}, 500 queries", lambda: knn_regress(Xk, yk, Qk, KnnConfig())),
        (f"QRF fit {trees} trees, n={n_qrf}", lambda: qrf_fit_matrix(Xq, yq, qcfg)),
        (f"QRF fit+predict {trees} trees, n={n_qrf}",
         lambda: qrf_fit_matrix(Xq, yq, qcfg).predict(Qk, 0.4)),
        (f"nu-SVR fit n={n_svr}", lambda: svr_fit_matrix(Xs, ys, SvrConfig()).decision(Qk)),
    ]


def timed(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    try:
        use("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    print(f"{'case':45s} {'cython s':>10s} {'python s':>10s} {'speed-up':>9s} {'max |diff|':>11s}")
    for label, fn in cases(args.quick):
        res = {}
        for b in ("cython", "python"):
            use(b)
            res[b] = timed(fn, 1 if b == "python" and not args.quick else args.repeat)
        (tc, oc), (tp, op) = res["cython"], res["python"]
        diff = f"{np.max(np.abs(oc - op)):.2e}" if isinstance(oc, np.ndarray) else "-"
        print(f"{label:45s} {tc:10.3f} {tp:10.3f} {tp / tc:8.1f}x {diff:>11s}")
    use(kernels.BACKEND)


if __name__ == "__main__":
    main()
