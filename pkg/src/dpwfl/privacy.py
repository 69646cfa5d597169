"""Gaussian-mechanism calibration, noise injection and basic composition."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MechanismParams:
    delta_dp: float = 0.01
    clip: float = 1.0
    learning_rate: float = 0.01

    def __post_init__(self):
        if not 0 < self.delta_dp < 1:
            raise ConfigError("delta_dp must lie in (0, 1)")
        if self.clip <= 0:
            raise ConfigError("clip must be positive")


def calibration_constant(delta_dp: float) -> float:
    """``sqrt(2 ln(1.25 / delta_dp))``."""
    if not 0 < delta_dp < 1:
        raise DomainError("delta_dp must lie in (0, 1)")
    return math.sqrt(2.0 * math.log(1.25 / delta_dp))


def sensitivity(learning_rate: float, clip: float, dataset_size: int) -> float:
    """L2 sensitivity ``2 * lr * C / |D_k|`` of a clipped local update."""
    if dataset_size <= 0:
        raise DomainError("dataset size must be positive")
    if learning_rate < 0 or clip <= 0:
        raise DomainError("learning rate must be >= 0 and clip > 0")
    if learning_rate == 0:
        log.warning("zero learning rate gives zero sensitivity")
    return 2.0 * learning_rate * clip / dataset_size


def gaussian_sigma(delta_s: float, eps: float, delta_dp: float) -> float:
    """Smallest noise std giving (eps, delta_dp)-DP for sensitivity ``delta_s``."""
    if not 0 < eps < 1:
        raise DomainError(f"eps={eps} outside (0, 1)")
    if delta_s < 0:
        raise DomainError("sensitivity must be non-negative")
    return delta_s * calibration_constant(delta_dp) / eps


def add_dp_noise(g, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise DomainError("sigma must be non-negative")
    g = np.asarray(g, dtype=float)
    if sigma == 0:
        return g.copy()
    return g + rng.normal(0.0, sigma, size=g.shape)


def composed_epsilon(ledger) -> float:
    """Worst per-device epsilon under basic (additive) composition.

    Raises:
        AssertionError: if any device exceeds the ledger's total budget.
    """
    rows = ledger.device_matrix()
    if rows.size == 0:
        return 0.0
    per_device = [math.fsum(col) for col in rows.T]
    worst = max(per_device)
    assert worst <= ledger.eps_total * (1 + 1e-12), f"composed epsilon {worst} exceeds {ledger.eps_total}"
    return worst
