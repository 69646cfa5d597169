"""Synthetic per-device datasets with controllable label skew.

IID devices draw labels uniformly over all classes; Non-IID devices only see a
fixed subset of labels, assigned round-robin. Features come from isotropic
Gaussian clusters (one centre per class) so the classes stay learnable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DomainError("features must be a 2-D array")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DomainError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True)
class PartitionSpec:
    """Describes how to build the device datasets.

    Attributes:
        num_devices: K, number of devices.
        num_classes: Z, number of label classes.
        iid_count: the first ``iid_count`` devices get a uniform label mix.
        labels_per_noniid_device: size of each Non-IID device's label subset.
        sizes: per-device sample counts (length K).
        feature_dim: dimension of the feature vectors.
        separation: standard deviation of the class-centre prior; larger
            values give better separated clusters.
        seed: RNG seed.
    """

    num_devices: int
    num_classes: int
    iid_count: int
    labels_per_noniid_device: int
    sizes: tuple[int, ...]
    feature_dim: int = 5
    separation: float = 3.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_devices < 1 or self.num_classes < 1:
            raise ConfigError("num_devices and num_classes must be positive")
        if not 0 <= self.iid_count <= self.num_devices:
            raise ConfigError("iid_count must lie in [0, num_devices]")
        if not 1 <= self.labels_per_noniid_device <= self.num_classes:
            raise ConfigError("labels_per_noniid_device must lie in [1, num_classes]")
        if len(self.sizes) != self.num_devices:
            raise ConfigError(f"expected {self.num_devices} sizes, got {len(self.sizes)}")
        if any(s < 1 for s in self.sizes):
            raise ConfigError("every device needs at least one sample")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be positive")


def noniid_label_subsets(spec: PartitionSpec) -> list[np.ndarray]:
    """Label subset of every device (all labels for IID devices)."""
    subsets = []
    n_lab = spec.labels_per_noniid_device
    for k in range(spec.num_devices):
        if k < spec.iid_count:
            subsets.append(np.arange(spec.num_classes))
        else:
            j = k - spec.iid_count
            subsets.append((j * n_lab + np.arange(n_lab)) % spec.num_classes)
    return subsets


def class_centers(spec: PartitionSpec) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, 0])
    return rng.normal(0.0, spec.separation, size=(spec.num_classes, spec.feature_dim))


def generate_partition(spec: PartitionSpec) -> list[LabeledDataset]:
    spec.validate()
    centers = class_centers(spec)
    rng = np.random.default_rng([spec.seed, 1])
    datasets = []
    for k, subset in enumerate(noniid_label_subsets(spec)):
        n = spec.sizes[k]
        labels = rng.choice(subset, size=n).astype(np.int64)
        feats = centers[labels] + rng.standard_normal((n, spec.feature_dim))
        datasets.append(LabeledDataset(feats, labels))
    return datasets


def sample_population(spec: PartitionSpec, size: int, seed=0) -> LabeledDataset:
    """Held-out sample with balanced labels from the same class clusters."""
    spec.validate()
    if size < 1:
        raise ConfigError("population sample needs at least one point")
    centers = class_centers(spec)
    rng = np.random.default_rng([spec.seed, 2, seed])
    labels = np.arange(size, dtype=np.int64) % spec.num_classes
    feats = centers[labels] + rng.standard_normal((size, spec.feature_dim))
    return LabeledDataset(feats, labels)


def label_pmf(data: LabeledDataset, num_classes: int) -> np.ndarray:
    if data.size == 0:
        raise DomainError("label_pmf of an empty dataset")
    if data.labels.max() >= num_classes or data.labels.min() < 0:
        raise DomainError("label outside [0, num_classes)")
    return np.bincount(data.labels, minlength=num_classes) / data.size


def global_pmf(datasets: list[LabeledDataset], num_classes: int) -> np.ndarray:
    labels = [d.labels for d in datasets if d.size > 0]
    if not labels:
        raise DomainError("global_pmf needs at least one non-empty dataset")
    merged = np.concatenate(labels)
    return np.bincount(merged, minlength=num_classes) / merged.size


def merge(datasets: list[LabeledDataset]) -> LabeledDataset:
    return LabeledDataset(
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
    )
