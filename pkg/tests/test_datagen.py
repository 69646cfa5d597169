from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwfl.datagen import (
    LabeledDataset,
    PartitionSpec,
    generate_partition,
    global_pmf,
    label_pmf,
    merge,
    sample_population,
)
from dpwfl.errors import ConfigError, DomainError


def _ds(labels):
    labels = np.asarray(labels, dtype=np.int64)
    return LabeledDataset(np.zeros((labels.size, 2)), labels)


def test_single_iid_device_sees_both_labels():
    (d,) = generate_partition(PartitionSpec(1, 2, 1, 1, (10,), seed=0))
    assert d.size == 10
    assert set(d.labels.tolist()) <= {0, 1}


def test_round_robin_single_labels():
    d0, d1 = generate_partition(PartitionSpec(2, 2, 0, 1, (20, 20), seed=4))
    assert set(d0.labels.tolist()) == {0}
    assert set(d1.labels.tolist()) == {1}


def test_partition_deterministic():
    spec = PartitionSpec(15, 10, 3, 2, (100,) * 15, seed=7)
    a, b = generate_partition(spec), generate_partition(spec)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.features, y.features)
        np.testing.assert_array_equal(x.labels, y.labels)


@pytest.mark.parametrize(
    "spec",
    [
        PartitionSpec(3, 2, 4, 1, (1, 1, 1)),
        PartitionSpec(3, 2, 0, 3, (1, 1, 1)),
        PartitionSpec(2, 2, 0, 1, (1,)),
        PartitionSpec(2, 2, 0, 1, (1, 0)),
    ],
)
def test_invalid_spec(spec):
    with pytest.raises(ConfigError):
        generate_partition(spec)


def test_label_pmf_examples():
    np.testing.assert_array_equal(label_pmf(_ds([0, 0, 1, 1]), 2), [0.5, 0.5])
    np.testing.assert_array_equal(label_pmf(_ds([1, 1]), 3), [0, 1, 0])
    with pytest.raises(DomainError):
        label_pmf(_ds([]), 2)


def test_global_pmf_examples():
    np.testing.assert_array_equal(global_pmf([_ds([1, 1]), _ds([1, 1])], 2), [0, 1])
    np.testing.assert_allclose(global_pmf([_ds([0] * 10), _ds([1] * 30)], 2), [0.25, 0.75])
    d = _ds([0, 2, 2])
    np.testing.assert_array_equal(global_pmf([d], 3), label_pmf(d, 3))
    with pytest.raises(DomainError):
        global_pmf([_ds([])], 2)


def test_population_sample_balanced():
    spec = PartitionSpec(3, 4, 1, 1, (5, 5, 5), seed=2)
    pop = sample_population(spec, 400)
    np.testing.assert_array_equal(label_pmf(pop, 4), [0.25] * 4)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 8),
    st.integers(1, 6),
    st.data(),
)
def test_pmfs_valid_and_global_matches_union(K, Z, data):
    iid = data.draw(st.integers(0, K))
    lab = data.draw(st.integers(1, Z))
    sizes = tuple(data.draw(st.lists(st.integers(1, 30), min_size=K, max_size=K)))
    ds = generate_partition(PartitionSpec(K, Z, iid, lab, sizes, seed=data.draw(st.integers(0, 999))))
    for d in ds:
        p = label_pmf(d, Z)
        assert np.all(p >= 0) and abs(p.sum() - 1.0) < 1e-12
    np.testing.assert_array_equal(global_pmf(ds, Z), label_pmf(merge(ds), Z))
