from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwfl import _kernels_py, kernels
from dpwfl.learner import make_specialist_task

compiled = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled kernels not built")


@compiled
def test_quadratic_trajectory_parity():
    rng = np.random.default_rng(0)
    K, q, T, S = 4, 3, 25, 5
    task = make_specialist_task(K, q, 1.0, 6.0, rng.normal(size=q))
    g = rng.dirichlet(np.ones(K))
    g[1] = 0.0
    args = (task.A, task.b, 0.01, g, 0.05, rng.normal(size=q), rng.uniform(0, 0.2, (T, K)),
            rng.standard_normal((S, T, K, q)), task.hessian(g), task.minimizer(g))
    ref = kernels.quadratic_trajectory(*args, backend=_kernels_py)
    got = kernels.quadratic_trajectory(*args, backend=kernels.compiled_backend)
    for a, b in zip(ref, got):
        np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-14)


@compiled
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(2, 8), st.integers(0, 10_000))
def test_wasserstein_rows_parity(n, Z, seed):
    rng = np.random.default_rng(seed)
    pmfs, target = rng.dirichlet(np.ones(Z), size=n), rng.dirichlet(np.ones(Z))
    np.testing.assert_allclose(
        kernels.wasserstein_rows(pmfs, target, backend=kernels.compiled_backend),
        kernels.wasserstein_rows(pmfs, target, backend=_kernels_py), rtol=1e-12, atol=1e-15)


@compiled
@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=50), st.floats(0, 10))
def test_first_crossing_parity(levels, channel):
    assert kernels.first_crossing(levels, channel, backend=kernels.compiled_backend) == \
        kernels.first_crossing(levels, channel, backend=_kernels_py)


def test_first_crossing_conventions():
    assert kernels.first_crossing([0.5, 0.2], 1.0) == 1
    assert kernels.first_crossing([3.0, 2.0, 1.5], 1.0) == 3
    assert kernels.first_crossing([3.0, 1.0, 0.5], 1.0) == 2


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        kernels.first_crossing(np.zeros((2, 2)), 1.0)
