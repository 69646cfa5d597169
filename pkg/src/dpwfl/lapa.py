"""Lightweight adaptive privacy allocation.

Per-round budgets follow the progress of training: a PID-like error over the
stored global-gradient norms shrinks the share of the remaining budget handed
to the current round. Each round's budget is then split between devices in
proportion to a contribution score derived from the (running-mean) angle
between the device's gradient and the global one.

Timing convention: the budget spent in round ``t`` is reserved at the start of
round ``t`` from the history of rounds ``1..t-1`` and split using the
smoothed angles observed up to round ``t-1`` (uniform split in round 1).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-4
EPS_CAP = 1.0 - 1e-9


class GradientHistory:
    """Append-only scalar summaries of past global gradients, indexed from 1."""

    def __init__(self, values=()):
        self._values: list[float] = [float(v) for v in values]

    def append(self, value: float) -> None:
        self._values.append(float(value))

    def __len__(self) -> int:
        return len(self._values)

    def __getitem__(self, i: int) -> float:
        if not 1 <= i <= len(self._values):
            raise DomainError(f"history index {i} not in [1, {len(self._values)}]")
        return self._values[i - 1]


@dataclass(frozen=True)
class PidConfig:
    kp: float = 1.0
    ks: float = 0.5
    window: int = 5
    sampling: str = "window"

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("PID window must be >= 1")
        if self.kp < 0 or self.ks < 0:
            raise ConfigError("PID coefficients must be non-negative")
        if self.sampling not in ("window", "random"):
            raise ConfigError(f"unknown PID sampling mode {self.sampling!r}")


@dataclass
class PrivacyLedger:
    eps_total: float
    num_rounds: int
    delta_dp: float
    eps_round: list[float] = field(default_factory=list)
    eps_device: list[np.ndarray] = field(default_factory=list)
    eps_consumed: float = 0.0
    exhausted: bool = False

    def record(self, eps_devices: np.ndarray) -> float:
        """Store one round's device budgets; the round spend is their exact sum."""
        spent = math.fsum(eps_devices)
        self.eps_device.append(np.asarray(eps_devices, dtype=float).copy())
        self.eps_round.append(spent)
        self.eps_consumed = math.fsum(self.eps_round)
        return spent

    @property
    def remaining(self) -> float:
        return self.eps_total - self.eps_consumed

    def device_matrix(self) -> np.ndarray:
        if not self.eps_device:
            return np.zeros((0, 0))
        return np.vstack(self.eps_device)


@dataclass
class AngleState:
    smoothed: np.ndarray | None = None
    round: int = 0


def feedback_error(history: GradientHistory, i: int, j: int) -> float:
    return abs(history[i] - history[j])


def pid_error(history: GradientHistory, cfg: PidConfig, rng: np.random.Generator | None = None) -> float:
    """PID-like progress error over the most recent stored summaries.

    Returns 0.0 while fewer than two summaries exist (warm-up).
    """
    n = len(history)
    if n < 2:
        log.debug("pid_error warm-up: %d summaries stored", n)
        return 0.0
    lo = max(1, n - cfg.window)
    if cfg.sampling == "random" and n - lo >= 2:
        if rng is None:
            raise ConfigError("random PID sampling needs an rng")
        # i_m is always the newest summary; the others are drawn from the window
        picks = rng.choice(np.arange(lo, n), size=min(cfg.window - 1, n - lo), replace=False)
        idx = sorted(int(i) for i in picks) + [n]
        if len(idx) < 2:
            idx = [n - 1, n]
    else:
        idx = list(range(lo, n + 1))
    errors = [feedback_error(history, b, a) for a, b in zip(idx[:-1], idx[1:])]
    e = cfg.kp * errors[-1] + cfg.ks * float(np.mean(errors))
    return max(e, 0.0)


def round_budget(e_t: float, ledger: PrivacyLedger, t: int) -> float:
    if not 1 <= t <= ledger.num_rounds:
        raise DomainError(f"round {t} outside [1, {ledger.num_rounds}]")
    remaining = ledger.remaining
    if remaining <= 0:
        ledger.exhausted = True
        return 0.0
    return math.exp(-e_t) * remaining / (ledger.num_rounds - t + 1)


def gradient_angle(global_g, local_g) -> float:
    """Angle in [0, pi] between two gradients; pi/2 if either is zero."""
    a = np.asarray(global_g, dtype=float)
    b = np.asarray(local_g, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        log.debug("degenerate gradient angle (zero vector)")
        return math.pi / 2
    cos = float(np.dot(a, b) / (na * nb))
    return math.acos(min(1.0, max(-1.0, cos)))


def smooth_angle(state: AngleState, theta, t: int) -> np.ndarray:
    """Running mean of the angles seen up to round ``t``; updates ``state``."""
    if t < 1:
        raise DomainError("round index must be >= 1")
    theta = np.asarray(theta, dtype=float)
    if t == 1 or state.smoothed is None:
        state.smoothed = theta.copy()
    else:
        state.smoothed = ((t - 1) / t) * state.smoothed + theta / t
    state.round = t
    return state.smoothed


def contribution(theta_smoothed, beta: float = 1.0):
    if beta <= 0:
        raise DomainError("beta must be positive")
    th = np.asarray(theta_smoothed, dtype=float)
    # -expm1(-x) keeps precision when the inner exponential is tiny
    out = -beta * np.expm1(-np.exp(-beta * (th - 1.0)))
    return float(out) if out.ndim == 0 else out


def device_budgets(contributions, eps_round: float) -> np.ndarray:
    f = np.asarray(contributions, dtype=float)
    total = float(np.sum(f))
    if total <= 0:
        warnings.warn("contributions sum to zero; splitting the round budget uniformly")
        return np.full(f.shape, eps_round / f.size)
    return f / total * eps_round


def fit_validity_range(shares: np.ndarray, floor: float = EPS_FLOOR, cap: float = EPS_CAP) -> np.ndarray:
    """Move device budgets into ``[floor, cap]`` without raising the round total.

    Shares above ``cap`` are cut (the excess stays unspent). Shares below
    ``floor`` are lifted and the others scaled down to pay for it; when the
    whole round cannot afford the floor the shares are left proportional.
    """
    out = np.minimum(np.asarray(shares, dtype=float), cap)
    total = float(np.sum(out))
    if out.size * floor > total:
        return out
    low = np.zeros(out.shape, dtype=bool)
    for _ in range(out.size):
        new_low = low | (out < floor)
        if not np.any(new_low & ~low):
            break
        low = new_low
        free = total - floor * low.sum()
        rest = out[~low]
        out = out.copy()
        out[low] = floor
        out[~low] = rest * (free / rest.sum())
    return out


class LapaAllocator:
    """Stateful LAPA budget schedule for one run."""

    def __init__(
        self,
        num_devices: int,
        eps_total: float,
        num_rounds: int,
        delta_dp: float,
        pid: PidConfig = PidConfig(),
        beta: float = 1.0,
        eps_floor: float = EPS_FLOOR,
        rng: np.random.Generator | None = None,
    ):
        if eps_total <= 0:
            raise ConfigError("eps_total must be positive")
        self.num_devices = num_devices
        self.ledger = PrivacyLedger(eps_total, num_rounds, delta_dp)
        self.history = GradientHistory()
        self.angles = AngleState()
        self.pid = pid
        self.beta = beta
        self.eps_floor = eps_floor
        self.rng = rng
        self.last_error = 0.0

    def budgets(self, t: int) -> np.ndarray:
        e = pid_error(self.history, self.pid, self.rng)
        self.last_error = e
        eps_t = round_budget(e, self.ledger, t)
        if self.ledger.exhausted or eps_t <= 0:
            raise DomainError(f"privacy budget exhausted at round {t}")
        if self.angles.smoothed is None:
            f = np.ones(self.num_devices)
        else:
            f = contribution(self.angles.smoothed, self.beta)
        shares = fit_validity_range(device_budgets(f, eps_t), self.eps_floor)
        self.ledger.record(shares)
        return shares

    def observe(self, global_g, local_gs) -> None:
        self.history.append(float(np.linalg.norm(global_g)))
        theta = [gradient_angle(global_g, g) for g in local_gs]
        smooth_angle(self.angles, theta, self.angles.round + 1)


class UniformAllocator:
    """Uniform-noise DP baseline: equal budget for every round and device."""

    def __init__(self, num_devices: int, eps_total: float, num_rounds: int, delta_dp: float, eps_floor: float = EPS_FLOOR):
        if eps_total <= 0:
            raise ConfigError("eps_total must be positive")
        self.num_devices = num_devices
        self.ledger = PrivacyLedger(eps_total, num_rounds, delta_dp)
        self.eps_floor = eps_floor
        self.last_error = 0.0

    def budgets(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.ledger.num_rounds:
            raise DomainError(f"round {t} outside [1, {self.ledger.num_rounds}]")
        share = self.ledger.eps_total / self.ledger.num_rounds / self.num_devices
        shares = fit_validity_range(np.full(self.num_devices, share), self.eps_floor)
        self.ledger.record(shares)
        return shares

    def observe(self, global_g, local_gs) -> None:
        pass
