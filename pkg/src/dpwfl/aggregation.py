"""Label-distribution heterogeneity, SINR-gated aggregation weights and the global update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import ConfigError, DomainError

W_FLOOR = 1e-3
POLICIES = ("wasserstein", "fedavg", "angle")


def wasserstein_1d(a, b) -> float:
    """W1 between two label PMFs on unit-spaced integer labels.

    In one dimension the optimal transport cost with ``|x - y|`` ground cost is
    the L1 distance between the two CDFs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError(f"PMF shapes differ: {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(np.cumsum(a - b)[:-1])))


@dataclass(frozen=True)
class WeightPolicy:
    kind: str = "wasserstein"
    gamma_th: float = 0.0
    w_floor: float = W_FLOOR

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ConfigError(f"unknown weight policy {self.kind!r}")
        if self.gamma_th < 0:
            raise ConfigError("gamma_th must be non-negative")


@dataclass(frozen=True)
class AggregationWeights:
    g: np.ndarray
    selected: np.ndarray

    @property
    def empty(self) -> bool:
        return not bool(np.any(self.selected))


def ser_to_gamma_th(ser: float, modulation: str = "bpsk") -> float:
    """SINR threshold at which the symbol error rate equals ``ser``.

    BPSK: ``SER = Q(sqrt(2 g))``. QPSK (Gray, high-SNR approximation):
    ``SER = 2 Q(sqrt(g))``.
    """
    if not 0 < ser < 0.5:
        raise ConfigError("SER preset must lie in (0, 0.5)")
    if modulation == "bpsk":
        return float(norm.isf(ser) ** 2 / 2.0)
    if modulation == "qpsk":
        return float(norm.isf(ser / 2.0) ** 2)
    raise ConfigError(f"unknown modulation {modulation!r}")


def compute_weights(pmfs, global_pmf, sizes, sinrs, policy: WeightPolicy, angles=None) -> AggregationWeights:
    """Aggregation weights over the devices whose SINR clears ``policy.gamma_th``.

    ``angles`` (radians, one per device) are only used by the ``angle``
    policy; when absent it falls back to size-proportional weights.
    """
    sizes = np.asarray(sizes, dtype=float)
    sinrs = np.asarray(sinrs, dtype=float)
    k = sizes.size
    if len(pmfs) != k or sinrs.size != k:
        raise DomainError("pmfs, sizes and sinrs disagree on the device count")
    selected = sinrs >= policy.gamma_th
    g = np.zeros(k)
    if not np.any(selected):
        return AggregationWeights(g, selected)
    if policy.kind == "wasserstein":
        w = np.array([max(wasserstein_1d(p, global_pmf), policy.w_floor) for p in pmfs])
        # softmax in log space: 1/W can reach 1/W_FLOOR = 1000
        logits = np.log(sizes) + 1.0 / w
        logits[~selected] = -np.inf
        g = np.exp(logits - logsumexp(logits[selected]))
    elif policy.kind == "fedavg" or angles is None:
        g = np.where(selected, sizes, 0.0)
        g = g / g.sum()
    else:
        score = np.maximum(np.cos(np.asarray(angles, dtype=float)), 0.0) * sizes
        score[~selected] = 0.0
        if score.sum() <= 0:
            score = np.where(selected, sizes, 0.0)
        g = score / score.sum()
    g[~selected] = 0.0
    return AggregationWeights(g, selected)


def aggregate(gradients, weights) -> np.ndarray:
    gw = weights.g if isinstance(weights, AggregationWeights) else np.asarray(weights, dtype=float)
    grads = [np.asarray(x, dtype=float) for x in gradients]
    if len({x.shape for x in grads}) != 1:
        raise DomainError("gradients have different shapes")
    if len(grads) != gw.size:
        raise DomainError("one weight per gradient required")
    return np.einsum("k,kq->q", gw, np.stack(grads))


def global_update(w, global_gradient, learning_rate: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    g = np.asarray(global_gradient, dtype=float)
    if w.shape != g.shape:
        raise DomainError("parameter and gradient shapes differ")
    return w - learning_rate * g
