"""Time the compiled kernels against their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from dpwfl import kernels
from dpwfl import _kernels_py as python_backend
from dpwfl.learner import make_specialist_task


def cases(rng):
    K, q, T, S = 5, 5, 200, 20
    task = make_specialist_task(K, q, 1.0, 10.0, rng.normal(size=q))
    g = np.full(K, 1.0 / K)
    traj_args = (
        task.A, task.b, 0.0, g, 0.05, rng.normal(size=q),
        np.full((T, K), 0.1), rng.standard_normal((S, T, K, q)),
        task.hessian(g), task.minimizer(g),
    )
    pmfs = rng.dirichlet(np.ones(10), size=2000)
    target = rng.dirichlet(np.ones(10))
    levels = np.geomspace(10.0, 0.01, 100_000)
    return {
        "quadratic_trajectory": ("quadratic_trajectory", traj_args),
        "wasserstein_rows": ("wasserstein_rows", (pmfs, target)),
        "first_crossing": ("first_crossing", (levels, 0.02)),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = {"python": python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    report = {}
    for name, (fn, fargs) in cases(rng).items():
        row = {}
        for label, mod in backends.items():
            f = getattr(kernels, fn)
            best = min(timeit.repeat(lambda: f(*fargs, backend=mod), number=1, repeat=args.repeat))
            row[label] = best
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        report[name] = row
        print(f"{name:22s} " + "  ".join(f"{k}={v:.4g}" for k, v in row.items()))
    print(json.dumps({"active_backend": kernels.BACKEND, "seconds": report}, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
