"""Power-allocation environments and the training loop that searches them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import control
from ..privacy import calibration_constant
from ..wireless import ChannelRealization, PowerAllocation, effective_noise_stds
from .agent import AgentConfig, DdpgAgent, RunningNorm, action_to_power, build_state, power_to_action

FAILED_OBJECTIVE = 1e12


@dataclass
class NoiseObjectiveEnv:
    """Noise part of the convergence bound as a function of transmit powers.

    With a fixed budget trajectory ``eps_rows`` (frozen mode) the switching
    round is recomputed for every allocation. Contraction factors at or above
    one are capped at one, which weights every round equally. In live mode ``budget_fn``
    returns a fresh trajectory per allocation instead (e.g. from a full
    simulation run).
    """

    channel: ChannelRealization
    weights: np.ndarray
    mu: float
    L: float
    delta: float
    learning_rate: float
    delta_s: np.ndarray
    delta_dp: float
    eps_rows: np.ndarray
    p_min_total: float
    p_max_total: float
    switching: bool = True
    budget_fn: Callable[[PowerAllocation], np.ndarray] | None = None

    @property
    def num_devices(self) -> int:
        return int(np.asarray(self.weights).size)

    @property
    def num_rounds(self) -> int:
        return int(np.asarray(self.eps_rows).shape[0])

    def amplitude_range(self) -> tuple[float, float]:
        lo = math.sqrt(self.p_min_total / self.num_devices) if self.p_min_total > 0 else 1e-3 * math.sqrt(self.p_max_total)
        return lo, math.sqrt(self.p_max_total)

    def evaluate(self, power: PowerAllocation) -> tuple[float, int]:
        eps = self.eps_rows if self.budget_fn is None else np.asarray(self.budget_fn(power), dtype=float)
        T = eps.shape[0]
        chan = effective_noise_stds(power, self.channel)
        c = calibration_constant(self.delta_dp)
        art_levels = (self.delta_s[None, :] * c / eps).sum(axis=1)
        t_th = control.switch_round(art_levels, float(chan.sum())) if self.switching else T
        # A >= 1 makes the bound vacuous and the weights overflow; fall back to plain sums
        A = min(1.0, control.contraction_factor(self.mu, self.L, self.learning_rate, self.delta, self.weights))
        g2 = np.asarray(self.weights, dtype=float) ** 2
        half = self.L * self.learning_rate**2 / 2.0
        chan_term = control.geometric_sum(A, T) * float(np.sum(g2 * chan**2))
        per_round = (g2[None, :] * self.delta_s[None, :] ** 2 * c**2 / eps[:t_th] ** 2).sum(axis=1)
        art_term = float(np.sum(A ** np.arange(t_th) * per_round))
        return half * (chan_term + art_term), t_th


@dataclass
class SurrogateEnv:
    """Single-device convex objective ``a / p^2 + b p^2`` with optimum ``(a/b)^(1/4)``."""

    a: float = 1.0
    b: float = 1.0
    p_min_total: float = 0.01
    p_max_total: float = 100.0
    num_rounds: int = 1
    num_devices: int = 1

    def amplitude_range(self) -> tuple[float, float]:
        return math.sqrt(self.p_min_total), math.sqrt(self.p_max_total)

    def evaluate(self, power: PowerAllocation) -> tuple[float, int]:
        p = float(power.p[0])
        return self.a / p**2 + self.b * p**2, 0

    @property
    def optimum(self) -> float:
        return (self.a / self.b) ** 0.25


@dataclass
class StepRecord:
    episode: int
    step: int
    reward: float
    objective: float
    t_th: int
    powers: np.ndarray


@dataclass
class OptimizeResult:
    best_power: PowerAllocation
    best_t_th: int
    best_reward: float
    trace: list[StepRecord] = field(default_factory=list)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.trace])


def env_step(env, power: PowerAllocation, norm: RunningNorm):
    """Evaluate an allocation: raw reward ``-L``, standardised objective and ``T_th``."""
    try:
        obj, t_th = env.evaluate(power)
    except (FloatingPointError, ValueError, ZeroDivisionError):
        obj, t_th = math.inf, env.num_rounds
    done = not math.isfinite(obj)
    if done:
        obj = FAILED_OBJECTIVE
    norm.update(obj)
    return -obj, norm(obj), t_th, done


def optimize_power(env, cfg: AgentConfig = AgentConfig()) -> OptimizeResult:
    """Train an agent on ``env`` and return the best allocation it executed."""
    K = env.num_devices
    T = max(1, env.num_rounds)
    lo, hi = env.amplitude_range()
    agent = DdpgAgent(K + 2, K, cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    norm = RunningNorm()
    start = action_to_power(np.zeros(K), lo, hi, env.p_min_total, env.p_max_total)
    best = None
    trace: list[StepRecord] = []
    step = 0
    for ep in range(cfg.episodes):
        state = build_state(power_to_action(start, lo, hi), 0.0, T, 0.0)
        for n in range(cfg.steps_per_episode):
            u = agent.act(state, cfg.noise_std(step), rng)
            power = action_to_power(u, lo, hi, env.p_min_total, env.p_max_total)
            reward, z, t_th, done = env_step(env, power, norm)
            next_state = build_state(power_to_action(power, lo, hi), t_th, T, z)
            agent.buffer.add(state, u, -z, next_state, done)
            if step >= cfg.warmup:
                agent.train_step()
            trace.append(StepRecord(ep, n, reward, -reward, t_th, power.p.copy()))
            if best is None or reward > best[0]:
                best = (reward, power, t_th)
            state = next_state
            step += 1
            if done:
                break
    return OptimizeResult(best[1], best[2], best[0], trace)
