"""Actor-critic agent for continuous transmit-power actions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..wireless import PowerAllocation, project_power
from .mlp import Adam, Mlp, soft_update


@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters of the agent and its training loop.

    Attributes:
        discount: reward discount in [0, 1).
        tau: soft target-update rate in (0, 1].
        noise_start, noise_end: exploration std (in normalised action units),
            decayed linearly over all training steps.
        batch_size: minibatch size; updates start once the buffer holds it.
        buffer_size: replay capacity.
        episodes, steps_per_episode: training length.
        actor_lr, critic_lr: Adam step sizes.
        hidden: hidden-layer widths shared by actor and critic.
        warmup: steps of pure exploration before network updates begin.
        seed: RNG seed for initialisation, exploration and sampling.
    """

    discount: float = 0.99
    tau: float = 0.001
    noise_start: float = 0.2
    noise_end: float = 0.02
    batch_size: int = 64
    buffer_size: int = 10_000
    episodes: int = 30
    steps_per_episode: int = 50
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden: tuple = (64, 64)
    warmup: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("discount must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ConfigError("buffer_size must be >= batch_size >= 1")
        if self.episodes < 1 or self.steps_per_episode < 1:
            raise ConfigError("episodes and steps_per_episode must be positive")

    def noise_std(self, step: int) -> float:
        total = max(1, self.episodes * self.steps_per_episode - 1)
        frac = min(1.0, step / total)
        return self.noise_start + frac * (self.noise_end - self.noise_start)


@dataclass(frozen=True)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, s, a, r, s_next, done: bool = False) -> None:
        i = self.inserted % self.capacity
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.done[i] = float(done)
        self.inserted += 1

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if len(self) < n:
            raise ValueError(f"buffer holds {len(self)} transitions, {n} requested")
        return rng.integers(0, len(self), size=n)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(n, rng)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.done[idx])


class RunningNorm:
    """Running mean/std (Welford) that can be frozen."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0
        self.frozen = False

    def update(self, x: float) -> None:
        if self.frozen:
            return
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self._m2 += d * (x - self.mean)

    @property
    def std(self) -> float:
        if self.count < 2:
            return 1.0
        s = math.sqrt(self._m2 / (self.count - 1))
        return s if s > 0 else 1.0

    def __call__(self, x: float) -> float:
        return (x - self.mean) / self.std


def build_state(prev_power, t_th: float, num_rounds: int, prev_objective: float) -> np.ndarray:
    """``[normalised powers, T_th / T, standardised objective]``."""
    return np.concatenate([np.asarray(prev_power, dtype=float).ravel(), [t_th / num_rounds, prev_objective]])


class DdpgAgent:
    def __init__(self, state_dim: int, action_dim: int, cfg: AgentConfig = AgentConfig()):
        self.cfg = cfg
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.rng = np.random.default_rng([cfg.seed, 1])
        init = np.random.default_rng([cfg.seed, 0])
        self.actor = Mlp((state_dim, *cfg.hidden, action_dim), "tanh", init)
        self.critic = Mlp((state_dim + action_dim, *cfg.hidden, 1), "linear", init)
        self.actor_target = self.actor.copy()
        self.critic_target_net = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, cfg.actor_lr)
        self.critic_opt = Adam(self.critic.params, cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_size, state_dim, action_dim)

    # -- policy ---------------------------------------------------------
    def act(self, state, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
        """Normalised action in [-1, 1]^K."""
        a = self.actor.forward(state)[0]
        if noise_std > 0:
            rng = rng if rng is not None else self.rng
            a = a + rng.normal(0.0, noise_std, a.shape)
        return np.clip(a, -1.0, 1.0)

    # -- learning ---------------------------------------------------------
    def q_values(self, states, actions, net: Mlp | None = None) -> np.ndarray:
        net = net or self.critic
        return net.forward(np.hstack([states, actions]))[:, 0]

    def critic_targets(self, batch: Batch) -> np.ndarray:
        return critic_target(batch, self.actor_target, self.critic_target_net, self.cfg.discount)

    def critic_gradients(self, batch: Batch, targets):
        x = np.hstack([batch.states, batch.actions])
        q, acts = self.critic.forward(x, cache=True)
        err = q[:, 0] - targets
        loss = float(np.mean(err**2))
        grads, _ = self.critic.backward(acts, (2.0 * err / err.size)[:, None])
        return loss, grads

    def critic_update(self, batch: Batch, targets) -> float:
        loss, grads = self.critic_gradients(batch, targets)
        self.critic_opt.step(self.critic.params, grads)
        return loss

    def actor_gradients(self, batch: Batch):
        """Gradient of ``-mean Q(s, mu(s))`` w.r.t. the actor parameters."""
        a, a_acts = self.actor.forward(batch.states, cache=True)
        q, c_acts = self.critic.forward(np.hstack([batch.states, a]), cache=True)
        n = batch.states.shape[0]
        _, dx = self.critic.backward(c_acts, np.full((n, 1), -1.0 / n))
        grads, _ = self.actor.backward(a_acts, dx[:, self.state_dim :])
        return float(-np.mean(q)), grads

    def actor_update(self, batch: Batch) -> float:
        _, grads = self.actor_gradients(batch)
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        self.actor_opt.step(self.actor.params, grads)
        return norm

    def update_targets(self) -> None:
        soft_update(self.actor, self.actor_target, self.cfg.tau)
        soft_update(self.critic, self.critic_target_net, self.cfg.tau)

    def train_step(self) -> tuple[float, float] | None:
        if len(self.buffer) < self.cfg.batch_size:
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        loss = self.critic_update(batch, self.critic_targets(batch))
        gnorm = self.actor_update(batch)
        self.update_targets()
        return loss, gnorm


def critic_target(batch: Batch, target_actor: Mlp, target_critic: Mlp, discount: float) -> np.ndarray:
    """``y = r + discount * Q'(s', mu'(s'))``, without bootstrap on terminal rows."""
    a_next = target_actor.forward(batch.next_states)
    q_next = target_critic.forward(np.hstack([batch.next_states, a_next]))[:, 0]
    return batch.rewards + discount * (1.0 - batch.done) * q_next


def action_to_power(action, amp_low: float, amp_high: float, p_min_total: float, p_max_total: float) -> PowerAllocation:
    """Map a normalised action log-uniformly onto ``[amp_low, amp_high]``, then project.

    Feasible amplitudes span orders of magnitude, so the log scale gives the
    policy equal resolution per decade.
    """
    u = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
    lo, hi = math.log(amp_low), math.log(amp_high)
    raw = np.exp(lo + 0.5 * (u + 1.0) * (hi - lo))
    return project_power(raw, p_min_total, p_max_total)


def power_to_action(power: PowerAllocation, amp_low: float, amp_high: float) -> np.ndarray:
    lo, hi = math.log(amp_low), math.log(amp_high)
    return np.clip(2.0 * (np.log(power.p) - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def select_action(agent: DdpgAgent, state, noise_std: float, rng, amp_low, amp_high, p_min_total, p_max_total):
    """Exploratory action and the feasible allocation it maps to."""
    u = agent.act(state, noise_std, rng)
    return u, action_to_power(u, amp_low, amp_high, p_min_total, p_max_total)
