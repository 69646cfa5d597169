from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwfl import control
from dpwfl.control import (
    CHANNEL_ONLY,
    BoundInputs,
    NoiseController,
    artificial_noise_level,
    bound_trajectory,
    communication_noise_level,
    contraction_factor,
    estimate_delta,
    max_learning_rate,
    switch_round,
    convergence_bound,
)
from dpwfl.privacy import gaussian_sigma
from dpwfl.wireless import ChannelRealization, PowerAllocation


def _ch(norms, sigma):
    return ChannelRealization(np.diag(np.asarray(norms, dtype=complex)), sigma)


def test_communication_noise_level_examples():
    p = PowerAllocation(np.array([1.0, 1.0]), 0, 10)
    assert communication_noise_level(p, _ch([1, 1], 0.0)) == 0.0
    assert communication_noise_level(p, _ch([1, 1], 0.5)) == pytest.approx(1.0)
    p3 = PowerAllocation(np.array([3.0, 3.0]), 0, 100)
    assert communication_noise_level(p3, _ch([1, 1], 0.5)) == pytest.approx(1.0 / 3)


def test_artificial_noise_level_examples():
    assert artificial_noise_level([0, 0], [0.3, 0.4], 0.01) == 0.0
    assert artificial_noise_level([0.2], [0.3], 0.01) == pytest.approx(gaussian_sigma(0.2, 0.3, 0.01))
    full = artificial_noise_level([0.1, 0.2], [0.4, 0.6], 0.01)
    assert artificial_noise_level([0.1, 0.2], [0.2, 0.3], 0.01) == pytest.approx(2 * full)


def test_switch_examples():
    assert switch_round([0.5, 0.4], 1.0) == 1
    assert switch_round([5.0, 4.0, 3.0], 1.0) == 3
    levels = np.geomspace(10, 0.1, 50)
    t_star = int(np.argmax(levels <= 1.0)) + 1
    assert switch_round(levels, 1.0) == t_star


def test_controller_never_reverts():
    nc = NoiseController()
    levels = [3.0, 2.0, 0.5, 4.0, 0.1]
    modes = [nc.check_switch(t, a, 1.0) for t, a in enumerate(levels, start=1)]
    assert nc.t_th == 3
    assert modes[3:] == [CHANNEL_ONLY, CHANNEL_ONLY]
    off = NoiseController(enabled=False)
    off.check_switch(1, 0.0, 1.0)
    assert off.final_t_th(7) == 7


def test_contraction_examples():
    assert contraction_factor(1, 1, 0.0, 1, [1.0]) == 1.0
    assert contraction_factor(1, 1, 1.0, 1, [1.0]) == pytest.approx(0.0)
    w = np.full(4, 0.25)
    lam_max = max_learning_rate(3.0, 1.2, w)
    for lam in (0.9 * lam_max, 1.1 * lam_max):
        A = contraction_factor(3.0, 3.0, lam, 1.2, w)
        assert (A < 1) == (lam < lam_max)


def test_max_learning_rate_examples():
    assert max_learning_rate(1, 1, [1.0]) == 2.0
    assert max_learning_rate(1, 2, [1.0]) < max_learning_rate(1, 1, [1.0])
    assert max_learning_rate(1, 1, np.full(5, 0.2)) == pytest.approx(10.0)


def test_divergence_regime_reported():
    w = np.full(3, 1 / 3)
    lam = 1.5 * max_learning_rate(10.0, 1.3, w)
    assert contraction_factor(10.0, 10.0, lam, 1.3, w) >= 1
    inp = _inputs(lr=lam, mu=10.0, L=10.0, delta=1.3, weights=w)
    terms = convergence_bound(inp, 1.0)
    assert terms.diverges and math.isinf(terms.total)


def test_estimate_delta_examples():
    g = np.array([1.0, 2.0])
    assert estimate_delta([g, g], g, [0.5, 0.5]) == 1.0
    assert estimate_delta([np.array([1.0, 0]), np.array([0, 1.0])], np.array([0.5, 0.5]), [0.5, 0.5]) == pytest.approx(math.sqrt(2))
    locs = [np.array([1.0, 3.0]), np.array([-2.0, 1.0])]
    glob = 0.5 * (locs[0] + locs[1])
    assert estimate_delta([7 * x for x in locs], 7 * glob, [0.5, 0.5]) == pytest.approx(estimate_delta(locs, glob, [0.5, 0.5]))
    assert estimate_delta(locs, np.zeros(2), [0.5, 0.5]) is None


def _inputs(lr=0.05, mu=1.0, L=2.0, delta=1.0, weights=(1.0,), channel_var=None, eps_rows=None, T=1, t_th=0, ds=None):
    w = np.asarray(weights, float)
    K = w.size
    return BoundInputs(
        mu, L, delta, lr, w,
        np.zeros(K) if channel_var is None else np.asarray(channel_var, float),
        np.full(K, 0.01) if ds is None else np.asarray(ds, float),
        0.01,
        np.full((max(T, 1), K), 0.5) if eps_rows is None else np.asarray(eps_rows, float),
        T, t_th,
    )


def test_bound_noise_free_is_contraction_only():
    inp = _inputs(T=7, t_th=0)
    A = contraction_factor(1.0, 2.0, 0.05, 1.0, [1.0])
    terms = convergence_bound(inp, 3.0)
    assert terms.total == pytest.approx(A**7 * 3.0)
    assert terms.channel == 0 and terms.artificial == 0


def test_bound_one_device_hand_evaluation():
    # mu=1, L=2, lr=0.1, delta=1, G=1: A = 1 + 2*0.01 - 0.2 = 0.82
    inp = _inputs(lr=0.1, channel_var=[0.25], eps_rows=[[0.5]], ds=[0.02], T=1, t_th=1)
    terms = convergence_bound(inp, 4.0)
    assert terms.contraction == pytest.approx(0.82)
    assert terms.initial == pytest.approx(0.82 * 4.0)
    assert terms.channel == pytest.approx(0.01 * 0.25)
    assert terms.artificial == pytest.approx(0.01 * 0.02**2 * 2 * math.log(125) / 0.25)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1000), st.floats(1.01, 3.0))
def test_bound_non_increasing_in_budgets(seed, factor):
    rng = np.random.default_rng(seed)
    K, T = 3, 6
    rows = rng.uniform(0.05, 0.3, (T, K))
    base = _inputs(weights=np.full(K, 1 / K), eps_rows=rows, T=T, t_th=T, ds=rng.uniform(0.01, 0.1, K))
    m, k = int(rng.integers(T)), int(rng.integers(K))
    raised = rows.copy()
    raised[m, k] = min(rows[m, k] * factor, 0.99)
    up = BoundInputs(**{**base.__dict__, "eps_rows": raised})
    assert convergence_bound(up, 1.0).total <= convergence_bound(base, 1.0).total


def test_trajectory_ends_at_bound():
    rows = np.full((5, 2), 0.2)
    inp = _inputs(weights=[0.5, 0.5], channel_var=[0.1, 0.3], eps_rows=rows, T=5, t_th=3)
    traj = bound_trajectory(inp, 2.0)
    assert traj[0] == 2.0
    assert traj[-1] == pytest.approx(convergence_bound(inp, 2.0).total, rel=1e-12)


def test_t_th_monotone_in_power_scale():
    rows = np.geomspace(0.05, 0.9, 40)[:, None] * np.ones(3)
    ds = np.full(3, 1e-3)
    levels = control.artificial_levels(ds, rows, 0.01)
    ch = _ch([1.0, 0.5, 0.2], 1e-2)
    prev = 0
    for c in np.geomspace(1, 100, 10):
        p = PowerAllocation(np.full(3, 0.1 * c), 0, 1e6)
        t = switch_round(levels, communication_noise_level(p, ch))
        assert t >= prev
        prev = t
