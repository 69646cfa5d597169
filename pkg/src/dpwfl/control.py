"""Dynamic noise-control switching and the convergence-bound evaluator.

Round indexing: simulation rounds are 1-based. ``T_th`` is the last round
that still carries artificial noise. The bound evaluator indexes the
artificial-noise sum from ``m = 0``; it receives the per-round device budget
rows in round order (row ``m`` belongs to round ``m + 1``) and the number of
artificial rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .privacy import calibration_constant, gaussian_sigma
from .wireless import ChannelRealization, PowerAllocation, effective_noise_stds

ARTIFICIAL_PLUS_CHANNEL = "artificial_plus_channel"
CHANNEL_ONLY = "channel_only"


def communication_noise_level(power: PowerAllocation, ch: ChannelRealization) -> float:
    return float(np.sum(effective_noise_stds(power, ch)))


def artificial_noise_level(delta_s, eps_devices, delta_dp: float) -> float:
    ds = np.asarray(delta_s, dtype=float)
    eps = np.asarray(eps_devices, dtype=float)
    if np.any(eps <= 0):
        raise ValueError("device budgets must be positive")
    return float(np.sum(ds * calibration_constant(delta_dp) / eps))


class NoiseController:
    """Sticky switch from artificial+channel noise to channel noise only.

    ``T_th`` is the first round whose artificial level does not exceed the
    channel level; artificial noise is still injected in that round and
    stops afterwards. Without a crossing ``T_th`` stays ``None`` (artificial
    noise for the whole run).
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.t_th: int | None = None

    def mode(self, t: int) -> str:
        if self.t_th is not None and t > self.t_th:
            return CHANNEL_ONLY
        return ARTIFICIAL_PLUS_CHANNEL

    def check_switch(self, t: int, artificial: float, channel: float) -> str:
        if self.enabled and self.t_th is None and artificial <= channel:
            self.t_th = t
        return self.mode(t)

    def final_t_th(self, num_rounds: int) -> int:
        return self.t_th if self.t_th is not None else num_rounds


def switch_round(artificial_levels, channel_level: float) -> int:
    """``T_th`` for a whole trajectory of per-round artificial levels (1-based)."""
    return kernels.first_crossing(artificial_levels, channel_level)


def artificial_levels(delta_s, eps_rows, delta_dp: float) -> np.ndarray:
    rows = np.asarray(eps_rows, dtype=float)
    c = calibration_constant(delta_dp)
    return (np.asarray(delta_s, dtype=float)[None, :] * c / rows).sum(axis=1)


def contraction_factor(mu: float, L: float, lr: float, delta: float, weights) -> float:
    g2 = float(np.sum(np.asarray(weights, dtype=float) ** 2))
    return 1.0 + mu * L * lr**2 * delta**2 * g2 - 2.0 * lr * mu


def max_learning_rate(L: float, delta: float, weights) -> float:
    g2 = float(np.sum(np.asarray(weights, dtype=float) ** 2))
    return 2.0 / (L * delta**2 * g2)


def estimate_delta(local_gradients, global_gradient, weights) -> float | None:
    """Weighted local dissimilarity for one round, floored at 1.

    Returns ``None`` when the global gradient vanishes (round skipped).
    """
    gnorm2 = float(np.dot(global_gradient, global_gradient))
    if gnorm2 == 0:
        return None
    w = np.asarray(weights, dtype=float)
    local2 = np.array([np.dot(g, g) for g in local_gradients], dtype=float)
    return max(1.0, math.sqrt(float(np.dot(w, local2)) / gnorm2))


def geometric_sum(A: float, n: int) -> float:
    """``sum_{j<n} A^j`` without dividing by ``1 - A``."""
    if n <= 0:
        return 0.0
    if A == 1.0:
        return float(n)
    return (1.0 - A**n) / (1.0 - A)


@dataclass(frozen=True)
class BoundInputs:
    mu: float
    L: float
    delta: float
    lr: float
    weights: np.ndarray
    channel_var: np.ndarray  # per-device sigma_n0^2 / (||h_k||^2 p_k^2)
    delta_s: np.ndarray
    delta_dp: float
    eps_rows: np.ndarray  # (rounds, K) device budgets in round order
    num_rounds: int
    artificial_rounds: int  # T_th; 0 means no artificial noise

    @classmethod
    def from_channel(cls, mu, L, delta, lr, weights, power: PowerAllocation, ch: ChannelRealization,
                     delta_s, delta_dp, eps_rows, num_rounds, artificial_rounds):
        var = effective_noise_stds(power, ch) ** 2
        return cls(mu, L, delta, lr, np.asarray(weights, float), var, np.asarray(delta_s, float),
                   delta_dp, np.asarray(eps_rows, float).reshape(-1, len(weights)), num_rounds, artificial_rounds)


@dataclass(frozen=True)
class BoundTerms:
    contraction: float
    initial: float
    channel: float
    artificial: float

    @property
    def total(self) -> float:
        return self.initial + self.channel + self.artificial

    @property
    def diverges(self) -> bool:
        return self.contraction >= 1.0

    def as_dict(self) -> dict:
        return {
            "contraction": self.contraction,
            "initial_term": self.initial,
            "channel_term": self.channel,
            "artificial_term": self.artificial,
            "total": self.total,
        }


def artificial_round_noise(inp: BoundInputs) -> np.ndarray:
    """Per-round weighted artificial noise energy ``sum_k G_k^2 ds_k^2 c^2 / eps_k^2``."""
    c2 = 2.0 * math.log(1.25 / inp.delta_dp)
    g2 = inp.weights**2
    return (g2[None, :] * inp.delta_s[None, :] ** 2 * c2 / inp.eps_rows**2).sum(axis=1)


def convergence_bound(inp: BoundInputs, initial_gap: float) -> BoundTerms:
    """Three-term convergence bound after ``inp.num_rounds`` rounds.

    Divergent settings (contraction >= 1) are reported with infinite terms.
    """
    A = contraction_factor(inp.mu, inp.L, inp.lr, inp.delta, inp.weights)
    if A >= 1.0:
        return BoundTerms(A, math.inf, math.inf, math.inf)
    T = inp.num_rounds
    half = inp.L * inp.lr**2 / 2.0
    chan = half * geometric_sum(A, T) * float(np.sum(inp.weights**2 * inp.channel_var))
    n_art = min(inp.artificial_rounds, T)
    art = 0.0
    if n_art > 0:
        per_round = artificial_round_noise(inp)[:n_art]
        art = half * float(np.sum(A ** np.arange(n_art) * per_round))
    return BoundTerms(A, A**T * initial_gap, chan, art)


def bound_trajectory(inp: BoundInputs, initial_gap: float) -> np.ndarray:
    """Bound value after ``t`` rounds for ``t = 0..T`` (artificial rounds capped at ``t``)."""
    A = contraction_factor(inp.mu, inp.L, inp.lr, inp.delta, inp.weights)
    T = inp.num_rounds
    if A >= 1.0:
        out = np.full(T + 1, math.inf)
        out[0] = initial_gap
        return out
    half = inp.L * inp.lr**2 / 2.0
    chan_round = float(np.sum(inp.weights**2 * inp.channel_var))
    n_art = min(inp.artificial_rounds, T)
    art_round = np.zeros(T)
    if n_art > 0:
        art_round[:n_art] = artificial_round_noise(inp)[:n_art]
    t = np.arange(T + 1)
    geo = (1.0 - A**t) / (1.0 - A)
    art_cum = np.concatenate([[0.0], np.cumsum(A ** np.arange(T) * art_round)])
    return A**t * initial_gap + half * geo * chan_round + half * art_cum


def device_sigmas(delta_s, eps_devices, delta_dp: float) -> np.ndarray:
    return np.array([gaussian_sigma(d, e, delta_dp) for d, e in zip(delta_s, eps_devices)])
