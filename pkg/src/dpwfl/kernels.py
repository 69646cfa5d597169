"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``DPWFL_PURE_PYTHON=1`` is set, the numpy twins in ``_kernels_py`` are used.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("DPWFL_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

BACKEND = "cython" if compiled_backend is not None else "python"


def _c(x, ndim):
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-D array, got {a.ndim}-D")
    return a


def first_crossing(artificial, channel: float, backend=None) -> int:
    mod = backend or compiled_backend or python_backend
    return int(mod.first_crossing(_c(artificial, 1), float(channel)))


def wasserstein_rows(pmfs, target, backend=None) -> np.ndarray:
    mod = backend or compiled_backend or python_backend
    return mod.wasserstein_rows(_c(pmfs, 2), _c(target, 1))


def quadratic_trajectory(A, b, l2_reg, weights, lr, w0, noise_std, z, ref_hessian, ref_minimizer, backend=None):
    mod = backend or compiled_backend or python_backend
    return mod.quadratic_trajectory(
        _c(A, 3), _c(b, 2), float(l2_reg), _c(weights, 1), float(lr), _c(w0, 1),
        _c(noise_std, 2), _c(z, 4), _c(ref_hessian, 2), _c(ref_minimizer, 1),
    )
