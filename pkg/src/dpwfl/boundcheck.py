"""Empirical check of the convergence bound on a quadratic task.

For each transmit-power level the harness

1. picks a learning rate as a fraction of ``max_learning_rate(L, delta, G)``;
2. freezes a LAPA budget trajectory from a noise-free reference run;
3. builds the per-round noise schedule (channel noise always, artificial
   noise up to the switching round);
4. runs many seeded noisy trajectories through the compiled kernel.

``delta`` is estimated on those trajectories and fed back into the learning
rate until the estimate no longer grows, so the reported ``delta`` is valid
for the very trajectories it is compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import control, kernels
from .aggregation import WeightPolicy, compute_weights
from .datagen import PartitionSpec, generate_partition, global_pmf, label_pmf
from .lapa import LapaAllocator, PidConfig
from .learner import QuadraticTask, clip_gradient, make_specialist_task
from .privacy import calibration_constant, sensitivity
from .wireless import Geometry, effective_noise_stds, equal_power, sample_channel, two_region_layout


@dataclass(frozen=True)
class BoundCheckConfig:
    num_devices: int = 5
    dim: int = 5
    mu: float = 1.0
    L: float = 10.0
    sizes: tuple = (60, 80, 100, 120, 140)
    policy: str = "fedavg"
    lr_fraction: float = 0.5
    num_rounds: int = 200
    num_seeds: int = 20
    power_levels: tuple = (1e8, 1e9, 1e10)
    eps_total: float = 10.0
    delta_dp: float = 0.01
    clip: float = 1.0
    sigma_n0: float = math.sqrt(1e-3)
    num_antennas: int = 15
    init_scale: float = 3.0
    switching: bool = True
    pid: PidConfig = field(default_factory=PidConfig)
    beta: float = 1.0
    max_delta_iters: int = 50
    seed: int = 0


@dataclass(frozen=True)
class BoundInstance:
    task: QuadraticTask
    weights: np.ndarray
    sizes: np.ndarray
    channel: object
    w0: np.ndarray


@dataclass
class BoundCheckResult:
    total_power: float
    delta: float
    delta_iterations: int
    learning_rate: float
    contraction: float
    t_th: int
    mean_gap: np.ndarray
    bound: np.ndarray
    terms: control.BoundTerms

    @property
    def violations(self) -> int:
        return int(np.sum(self.mean_gap > self.bound))

    @property
    def min_ratio(self) -> float:
        """Smallest bound / measured ratio over rounds 1..T."""
        return float(np.min(self.bound[1:] / np.maximum(self.mean_gap[1:], np.finfo(float).tiny)))

    def summary(self) -> dict:
        return {
            "total_power": self.total_power,
            "delta": self.delta,
            "delta_iterations": self.delta_iterations,
            "learning_rate": self.learning_rate,
            "t_th": self.t_th,
            "violations": self.violations,
            "min_bound_ratio": self.min_ratio,
            "final_mean_gap": float(self.mean_gap[-1]),
            **self.terms.as_dict(),
        }


def build_instance(cfg: BoundCheckConfig) -> BoundInstance:
    K = cfg.num_devices
    rng = np.random.default_rng([cfg.seed, 10])
    optimum = rng.normal(size=cfg.dim)
    task = make_specialist_task(K, cfg.dim, cfg.mu, cfg.L, optimum)
    spec = PartitionSpec(K, K, 0, 1, tuple(cfg.sizes), seed=cfg.seed)
    data = generate_partition(spec)
    pmfs = np.array([label_pmf(d, K) for d in data])
    sizes = np.array(cfg.sizes, dtype=float)
    g = compute_weights(pmfs, global_pmf(data, K), sizes, np.ones(K), WeightPolicy(cfg.policy)).g
    geo = Geometry(np.array([-50.0, 0.0, 10.0]), two_region_layout(K, (K + 1) // 2, seed=cfg.seed))
    ch = sample_channel(geo, cfg.num_antennas, cfg.sigma_n0, seed=[cfg.seed, 11])
    w0 = optimum + cfg.init_scale * rng.normal(size=cfg.dim)
    return BoundInstance(task, g, sizes, ch, w0)


def reference_budgets(inst: BoundInstance, lr: float, cfg: BoundCheckConfig) -> np.ndarray:
    """LAPA device budgets (T, K) observed along the noise-free trajectory.

    The allocator sees clipped gradients, as the server would; the model
    update itself uses the raw gradients of the analysed update rule.
    """
    K = inst.weights.size
    alloc = LapaAllocator(K, cfg.eps_total, cfg.num_rounds, cfg.delta_dp, cfg.pid, cfg.beta)
    w = inst.w0.copy()
    rows = []
    for t in range(1, cfg.num_rounds + 1):
        rows.append(alloc.budgets(t))
        local = [inst.task.gradient(w, None, k) for k in range(K)]
        g = np.einsum("k,kq->q", inst.weights, np.stack(local))
        clipped = [clip_gradient(x, cfg.clip) for x in local]
        alloc.observe(np.einsum("k,kq->q", inst.weights, np.stack(clipped)), clipped)
        w = w - lr * g
    return np.vstack(rows)


def _noise_schedule(inst, lr, total_power, cfg):
    K, T = inst.weights.size, cfg.num_rounds
    power = equal_power(K, total_power, 0.0, math.inf)
    chan_std = effective_noise_stds(power, inst.channel)
    eps = reference_budgets(inst, lr, cfg)
    ds = np.array([sensitivity(lr, cfg.clip, int(n)) for n in inst.sizes])
    sig = ds[None, :] * calibration_constant(cfg.delta_dp) / eps
    if cfg.switching:
        t_th = control.switch_round(sig.sum(axis=1), float(chan_std.sum()))
    else:
        t_th = T
    active = (np.arange(1, T + 1) <= t_th)[:, None]
    std = np.sqrt(chan_std[None, :] ** 2 + active * sig**2)
    return std, power, ds, eps, t_th


def check_power_level(inst: BoundInstance, total_power: float, cfg: BoundCheckConfig, level: int = 0) -> BoundCheckResult:
    task, G = inst.task, inst.weights
    mu, L = task.device_constants()
    H = task.hessian(G)
    ws = task.minimizer(G)
    K, T, S, q = G.size, cfg.num_rounds, cfg.num_seeds, task.num_params
    z = np.random.default_rng([cfg.seed, 20, level]).standard_normal((S, T, K, q))
    delta = 1.0
    for it in range(1, cfg.max_delta_iters + 1):
        lr = cfg.lr_fraction * control.max_learning_rate(L, delta, G)
        std, power, ds, eps, t_th = _noise_schedule(inst, lr, total_power, cfg)
        gaps, ratio = kernels.quadratic_trajectory(task.A, task.b, task.l2_reg, G, lr, inst.w0, std, z, H, ws)
        est = max(1.0, math.sqrt(float(np.nanmax(ratio)))) if np.any(np.isfinite(ratio)) else 1.0
        if est <= delta:
            break
        delta = est
    mean_gap = gaps.mean(axis=0)
    inp = control.BoundInputs.from_channel(mu, L, delta, lr, G, power, inst.channel, ds, cfg.delta_dp, eps, T, t_th)
    bound = control.bound_trajectory(inp, float(mean_gap[0]))
    terms = control.convergence_bound(inp, float(mean_gap[0]))
    return BoundCheckResult(total_power, delta, it, lr, terms.contraction, t_th, mean_gap, bound, terms)


def check_bound(cfg: BoundCheckConfig = BoundCheckConfig()) -> list[BoundCheckResult]:
    inst = build_instance(cfg)
    return [check_power_level(inst, p, cfg, i) for i, p in enumerate(cfg.power_levels)]
