from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwfl.datagen import LabeledDataset, PartitionSpec, generate_partition, merge
from dpwfl.errors import DomainError
from dpwfl.learner import (
    LogisticTask,
    QuadraticTask,
    clip_gradient,
    local_gradient,
    local_loss,
    make_quadratic_task,
    make_specialist_task,
    mixture_quadratic,
    quadratic_classes,
    task_constants,
)
from helpers import central_difference, relative_error


def _data(seed=0, n=30, d=4, Z=3):
    rng = np.random.default_rng(seed)
    return LabeledDataset(rng.normal(size=(n, d)), rng.integers(0, Z, n))


def test_quadratic_zero_at_minimum():
    task = QuadraticTask(np.array([np.diag([1.0, 4.0])]), np.array([[0.3, -1.0]]))
    assert local_loss(np.array([0.3, -1.0]), None, task) == 0.0
    np.testing.assert_array_equal(local_gradient(np.array([0.3, -1.0]), None, task), 0.0)


def test_logistic_uniform_prediction_loss_is_log_z():
    task = LogisticTask(4, 3)
    assert local_loss(np.zeros(task.num_params), _data(), task) == pytest.approx(math.log(3), rel=1e-14)


def test_l2_additivity():
    d = _data(1)
    w = np.random.default_rng(2).normal(size=15)
    a = LogisticTask(4, 3, 0.1).loss(w, d)
    b = LogisticTask(4, 3, 0.3).loss(w, d)
    assert b - a == pytest.approx(0.1 * w @ w, rel=1e-12)


def test_merged_gradient_is_size_weighted_mean():
    parts = generate_partition(PartitionSpec(3, 3, 1, 1, (10, 20, 30), feature_dim=4, seed=5))
    task = LogisticTask(4, 3, 0.01)
    w = np.random.default_rng(0).normal(size=task.num_params)
    sizes = np.array([10, 20, 30]) / 60
    mean = sum(s * task.gradient(w, d) for s, d in zip(sizes, parts))
    np.testing.assert_allclose(task.gradient(w, merge(parts)), mean, rtol=1e-12, atol=1e-14)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        LogisticTask(4, 3).loss(np.zeros(7), _data())
    with pytest.raises(DomainError):
        LogisticTask(5, 3).gradient(np.zeros(18), _data())


def test_clip_examples():
    g = np.array([0.3, 0.4])
    np.testing.assert_array_equal(clip_gradient(g, 1.0), g)
    out = clip_gradient(np.array([3.0, 4.0]), 2.5)
    assert np.linalg.norm(out) == pytest.approx(2.5)
    np.testing.assert_allclose(out, [1.5, 2.0])
    np.testing.assert_array_equal(clip_gradient(np.zeros(3), 1.0), 0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=10), st.floats(1e-3, 1e3))
def test_clip_properties(g, C):
    g = np.array(g)
    once = clip_gradient(g, C)
    assert np.linalg.norm(once) <= C * (1 + 1e-12)
    np.testing.assert_allclose(clip_gradient(once, C), once, rtol=1e-12, atol=0)
    if np.linalg.norm(g) > 0:
        assert once @ g >= 0


def test_constants_examples():
    eye = QuadraticTask(np.stack([np.eye(3)] * 2), np.zeros((2, 3)))
    assert task_constants(eye) == pytest.approx((1.0, 1.0))
    diag = QuadraticTask(np.stack([np.diag([1.0, 4.0])] * 2), np.zeros((2, 2)))
    assert task_constants(diag) == pytest.approx((1.0, 4.0))
    shifted = QuadraticTask(diag.A, diag.b, 0.5)
    assert task_constants(shifted) == pytest.approx((1.5, 4.5))
    with pytest.raises(DomainError):
        LogisticTask(4, 3, 0.0).constants([_data()])


def test_logistic_constants_bound_true_curvature():
    d = _data(3)
    task = LogisticTask(4, 3, 0.01)
    mu, L = task.constants([d])
    w = np.random.default_rng(0).normal(size=task.num_params)
    H = np.column_stack([central_difference(lambda v: task.gradient(v, d)[i], w) for i in range(task.num_params)])
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    assert ev[0] >= mu - 1e-6
    assert ev[-1] <= L


def test_mixture_quadratic_is_label_mixture_of_class_losses():
    class_A, centers = quadratic_classes(3, 4, 1.0, 5.0, seed=1)
    pmf = np.array([0.2, 0.5, 0.3])
    task = mixture_quadratic(class_A, centers, pmf)
    w1, w2 = np.random.default_rng(0).normal(size=(2, 4))

    def mix(w):
        return sum(p * 0.5 * (w - c) @ A @ (w - c) for p, A, c in zip(pmf, class_A, centers))

    # equal up to a constant
    assert task.loss(w1) - task.loss(w2) == pytest.approx(mix(w1) - mix(w2), rel=1e-10)
    mu, L = task.device_constants()
    assert 1.0 - 1e-12 <= mu and L <= 5.0 + 1e-12


def test_specialist_task_spectrum_and_shared_optimum():
    opt = np.arange(5.0)
    task = make_specialist_task(5, 5, 1.0, 10.0, opt)
    assert task.device_constants() == pytest.approx((1.0, 10.0))
    for k in range(5):
        np.testing.assert_array_equal(task.gradient(opt, None, k), 0.0)
    assert math.isfinite(task.dissimilarity(np.full(5, 0.2)))


def test_quadratic_json_roundtrip():
    task = make_quadratic_task(np.eye(3), 4, 1.0, 3.0, seed=2)
    back = QuadraticTask.from_json(task.to_json())
    np.testing.assert_array_equal(back.A, task.A)
    np.testing.assert_array_equal(back.b, task.b)


def test_gradients_match_finite_differences():
    """At least 100 probes per task, relative error below 1e-5."""
    rng = np.random.default_rng(123)
    worst = 0.0
    for probe in range(100):
        d = _data(probe, n=20, d=3, Z=4)
        task = LogisticTask(3, 4, float(rng.uniform(0, 0.1)))
        w = rng.normal(size=task.num_params)
        worst = max(worst, relative_error(task.gradient(w, d), central_difference(lambda v: task.loss(v, d), w)))
        q = make_quadratic_task(rng.dirichlet(np.ones(4), size=2), 3, 0.5, 4.0, seed=probe, l2_reg=0.1)
        w = rng.normal(size=3)
        worst = max(worst, relative_error(q.gradient(w, None, 1), central_difference(lambda v: q.loss(v, None, 1), w)))
    assert worst < 1e-5
