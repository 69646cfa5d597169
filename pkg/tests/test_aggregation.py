from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpwfl.aggregation import (
    WeightPolicy,
    aggregate,
    compute_weights,
    global_update,
    ser_to_gamma_th,
    wasserstein_1d,
)
from dpwfl.errors import ConfigError, DomainError
from dpwfl.learner import make_quadratic_task
from helpers import transport_lp


def test_wasserstein_examples():
    p = np.array([0.2, 0.3, 0.5])
    assert wasserstein_1d(p, p) == 0.0
    assert wasserstein_1d([1, 0], [0, 1]) == pytest.approx(1.0)
    assert wasserstein_1d([0.5, 0.5], [0, 1]) == pytest.approx(0.5)
    assert transport_lp([0.5, 0.5], [0, 1]) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(DomainError):
        wasserstein_1d([1.0], [0.5, 0.5])


def test_wasserstein_matches_lp_oracle():
    rng = np.random.default_rng(0)
    for _ in range(60):
        Z = int(rng.integers(2, 6))
        a, b = rng.dirichlet(np.ones(Z), size=2)
        assert abs(wasserstein_1d(a, b) - transport_lp(a, b)) <= 1e-9


def _pmfs(k, z=3):
    return [np.full(z, 1.0 / z)] * k


def test_weights_examples():
    gp = np.full(3, 1 / 3)
    pm = [np.array([0.5, 0.5, 0.0])] * 3
    w = compute_weights(pm, gp, [10, 10, 10], [5.0] * 3, WeightPolicy("wasserstein"))
    np.testing.assert_allclose(w.g, [1 / 3] * 3, rtol=1e-12)
    w = compute_weights(pm[:2], gp, [10, 10], [0.5, 5.0], WeightPolicy("wasserstein", gamma_th=1.0))
    np.testing.assert_array_equal(w.g, [0.0, 1.0])
    for kind in ("wasserstein", "fedavg"):
        w = compute_weights(pm[:2], gp, [100, 300], [1.0, 1.0], WeightPolicy(kind))
        np.testing.assert_allclose(w.g, [0.25, 0.75], rtol=1e-12)


def test_empty_selection_and_policies():
    w = compute_weights(_pmfs(2), np.full(3, 1 / 3), [1, 1], [0.1, 0.2], WeightPolicy(gamma_th=1.0))
    assert w.empty and np.all(w.g == 0)
    angle = compute_weights(_pmfs(2), np.full(3, 1 / 3), [1, 1], [1, 1], WeightPolicy("angle"), angles=[0.0, np.pi])
    np.testing.assert_array_equal(angle.g, [1.0, 0.0])
    with pytest.raises(ConfigError):
        WeightPolicy("median")


def test_ser_presets():
    from scipy.stats import norm

    g = ser_to_gamma_th(1e-2, "bpsk")
    assert norm.sf(np.sqrt(2 * g)) == pytest.approx(1e-2, rel=1e-10)
    g = ser_to_gamma_th(1e-3, "qpsk")
    assert 2 * norm.sf(np.sqrt(g)) == pytest.approx(1e-3, rel=1e-10)
    assert ser_to_gamma_th(1e-3) > ser_to_gamma_th(1e-2) > ser_to_gamma_th(1e-1)


pmf_lists = st.integers(2, 8).flatmap(
    lambda k: st.tuples(
        st.lists(arrays(float, 4, elements=st.floats(0.01, 1.0)), min_size=k, max_size=k),
        st.lists(st.integers(1, 500), min_size=k, max_size=k),
        st.lists(st.floats(0, 10), min_size=k, max_size=k),
    )
)


@settings(max_examples=200, deadline=None)
@given(pmf_lists, st.sampled_from(["wasserstein", "fedavg", "angle"]), st.floats(0, 10))
def test_weights_normalized_and_exclusion_monotone(data, kind, gth):
    raw, sizes, sinrs = data
    pmfs = [r / r.sum() for r in raw]
    gp = np.mean(pmfs, axis=0)
    angles = np.linspace(0, np.pi, len(sizes))
    w = compute_weights(pmfs, gp, sizes, sinrs, WeightPolicy(kind, gth), angles)
    if not w.empty:
        assert abs(w.g.sum() - 1) <= 1e-12
    assert np.all(w.g[~w.selected] == 0)
    higher = compute_weights(pmfs, gp, sizes, sinrs, WeightPolicy(kind, gth + 1.0), angles)
    assert not np.any(higher.selected & ~w.selected)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.6), st.floats(0.05, 0.6))
def test_smaller_distance_gets_larger_weight(x, y):
    if abs(x - y) < 1e-3:
        return
    gp = np.array([0.5, 0.5])
    pmfs = [np.array([0.5 + x, 0.5 - x]) / 1.0, np.array([0.5 + y, 0.5 - y])]
    pmfs = [np.clip(p, 0, 1) / np.clip(p, 0, 1).sum() for p in pmfs]
    w = compute_weights(pmfs, gp, [10, 10], [1, 1], WeightPolicy())
    d0, d1 = (wasserstein_1d(p, gp) for p in pmfs)
    assert (w.g[0] > w.g[1]) == (d0 < d1)


def test_aggregate_examples():
    g = np.array([1.0, -2.0])
    np.testing.assert_allclose(aggregate([g, g, g], np.full(3, 1 / 3)), g)
    np.testing.assert_array_equal(aggregate([g, 2 * g], [1.0, 0.0]), g)
    gs = [np.array([1.0, 2.0]), np.array([3.0, -1.0])]
    w = np.array([0.3, 0.7])
    np.testing.assert_allclose(aggregate([2.5 * x for x in gs], w), 2.5 * aggregate(gs, w))
    with pytest.raises(DomainError):
        aggregate([np.zeros(2), np.zeros(3)], [0.5, 0.5])


def test_global_update_examples():
    w = np.array([1.0, 2.0])
    np.testing.assert_array_equal(global_update(w, np.zeros(2), 0.3), w)
    np.testing.assert_array_equal(global_update(w, np.ones(2), 0.0), w)
    task = make_quadratic_task(np.eye(3), 4, 1.0, 5.0, seed=0)
    G = np.full(3, 1 / 3)
    x = np.ones(4)
    for _ in range(20):
        grad = sum(G[k] * task.gradient(x, None, k) for k in range(3))
        if np.linalg.norm(grad) < 1e-6:
            break
        nxt = global_update(x, grad, 1.9 / 5.0)
        before = sum(G[k] * task.loss(x, None, k) for k in range(3))
        after = sum(G[k] * task.loss(nxt, None, k) for k in range(3))
        assert after < before
        x = nxt
