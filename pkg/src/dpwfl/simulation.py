"""End-to-end federated runs, suites of cells, and their CSV/JSON output."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import __version__, control, kernels
from .aggregation import WeightPolicy, aggregate, compute_weights, global_update, ser_to_gamma_th
from .config import canonical_json, cell_names, config_hash, resolve_cell
from .datagen import PartitionSpec, generate_partition, global_pmf, label_pmf, merge, sample_population
from .errors import DomainError, RunFailure
from .lapa import LapaAllocator, PidConfig, UniformAllocator, gradient_angle
from .learner import LogisticTask, clip_gradient, mixture_quadratic, quadratic_classes
from .privacy import calibration_constant, sensitivity
from .wireless import (
    Geometry,
    PowerAllocation,
    effective_noise_stds,
    equal_power,
    sample_channel,
    sinr_all,
    two_region_layout,
)

log = logging.getLogger(__name__)

SCALAR_COLUMNS = (
    "seed",
    "t",
    "global_loss",
    "gap",
    "train_gap",
    "own_gap",
    "grad_norm",
    "dissimilarity",
    "eps_round",
    "eps_consumed",
    "pid_error",
    "noise_mode",
    "t_th",
    "artificial_level",
    "channel_level",
    "selected",
)
DEVICE_GROUPS = ("eps", "sigma", "weight", "sinr")


def trace_columns(num_devices: int) -> list[str]:
    cols = list(SCALAR_COLUMNS)
    for group in DEVICE_GROUPS:
        cols += [f"{group}_{k}" for k in range(num_devices)]
    return cols


@dataclass
class RoundTrace:
    seed: int
    t: int
    global_loss: float
    gap: float
    train_gap: float
    own_gap: float
    grad_norm: float
    dissimilarity: float
    eps_round: float
    eps_consumed: float
    pid_error: float
    noise_mode: str
    t_th: int | None
    artificial_level: float
    channel_level: float
    selected: int
    eps: np.ndarray
    sigma: np.ndarray
    weight: np.ndarray
    sinr: np.ndarray

    def row(self) -> list[str]:
        out = [str(self.seed), str(self.t)]
        for name in SCALAR_COLUMNS[2:]:
            val = getattr(self, name)
            if name == "noise_mode":
                out.append(val)
            elif name == "t_th":
                out.append("" if val is None else str(val))
            elif name == "selected":
                out.append(str(val))
            else:
                out.append(_fmt(val))
        for group in DEVICE_GROUPS:
            out += [_fmt(v) for v in getattr(self, group)]
        return out


def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class RunSetup:
    cfg: dict
    seed: int
    datasets: list
    pmfs: np.ndarray
    global_pmf: np.ndarray
    sizes: np.ndarray
    task: object
    channel: object
    power: PowerAllocation
    policy: WeightPolicy
    w0: np.ndarray
    population: object  # balanced-label quadratic (1 device) or held-out dataset


@dataclass
class SimulationResult:
    traces: list[RoundTrace]
    eps_rows: np.ndarray
    t_th: int | None
    setup: RunSetup
    initial_gap: float
    initial_own_gap: float


def _sizes(part: dict) -> tuple[int, ...]:
    s = part["sizes"]
    if isinstance(s, int):
        return (s,) * int(part["num_devices"])
    return tuple(int(v) for v in s)


def build_setup(cfg: dict, seed: int, power: PowerAllocation | None = None) -> RunSetup:
    """Data, task, channel and power for one ``(config, seed)`` pair."""
    part = cfg["partition"]
    pseed = seed if part["seed"] is None else part["seed"]
    spec = PartitionSpec(
        int(part["num_devices"]),
        int(part["num_classes"]),
        int(part["iid_count"]),
        int(part["labels_per_noniid_device"]),
        _sizes(part),
        int(part["feature_dim"]),
        float(part["separation"]),
        pseed,
    )
    datasets = generate_partition(spec)
    Z = spec.num_classes
    pmfs = np.array([label_pmf(d, Z) for d in datasets])
    gp = global_pmf(datasets, Z)
    sizes = np.array(spec.sizes, dtype=float)
    tc = cfg["task"]
    init_rng = np.random.default_rng([pseed, 6])
    if tc["kind"] == "quadratic":
        class_A, centers = quadratic_classes(Z, int(tc["dim"]), float(tc["mu"]), float(tc["L"]), float(tc["target_scale"]), seed=[pseed, 5])
        task = mixture_quadratic(class_A, centers, pmfs)
        population = mixture_quadratic(class_A, centers, np.full(Z, 1.0 / Z))
        w0 = tc["init_scale"] * init_rng.normal(size=task.num_params)
    else:
        task = LogisticTask(spec.feature_dim, Z, float(tc["l2_reg"]))
        population = sample_population(spec, int(tc["eval_size"]))
        w0 = tc["init_scale"] * init_rng.normal(size=task.num_params)

    wc = cfg["wireless"]
    wseed = seed if wc["seed"] is None else wc["seed"]
    geo = Geometry(
        np.array(wc["bs_position"], dtype=float),
        two_region_layout(spec.num_devices, int(wc["in_region_one"]), seed=[wseed, 0]),
        float(wc["gain_bs_dbi"]),
        float(wc["gain_device_dbi"]),
        float(wc["carrier_hz"]),
        float(wc["path_exponent"]),
    )
    ch = sample_channel(geo, int(wc["num_antennas"]), math.sqrt(float(wc["noise_power"])), seed=[wseed, 1])
    if power is None:
        power = configured_power(cfg, spec.num_devices)
    ac = cfg["aggregation"]
    gamma = ser_to_gamma_th(ac["ser"], ac["modulation"]) if ac["ser"] is not None else float(ac["gamma_th"])
    policy = WeightPolicy(ac["policy"], gamma)
    return RunSetup(cfg, seed, datasets, pmfs, gp, sizes, task, ch, power, policy, np.asarray(w0, dtype=float), population)


def configured_power(cfg: dict, num_devices: int) -> PowerAllocation:
    pc = cfg["wireless"]["power"]
    pmin, pmax = float(pc["p_min_total"]), float(pc["p_max_total"])
    if pc["mode"] == "explicit":
        return PowerAllocation(np.array(pc["values"], dtype=float), pmin, pmax)
    total = pmax / 2.0 if pc["total"] is None else float(pc["total"])
    return equal_power(num_devices, total, pmin, pmax)


class _Objective:
    """Balanced-population loss, training-union loss and per-weights gap.

    ``gap`` is measured on the class-balanced population (the held-out test
    distribution); ``train_gap`` on the size-weighted union of device data.
    """

    def __init__(self, setup: RunSetup):
        self.setup = setup
        task = setup.task
        self.union_w = setup.sizes / setup.sizes.sum()
        if task.kind == "quadratic":
            self.union_min = task.weighted_loss(task.minimizer(self.union_w), self.union_w)
            pop = setup.population
            self.pop_min = pop.loss(pop.minimizer([1.0]))
        else:
            self.merged = merge(setup.datasets)
            self.union_min = self._lbfgs(self.merged)
            self.pop_min = self._lbfgs(setup.population)
        self._own_cache: dict[bytes, tuple] = {}

    def _lbfgs(self, data) -> float:
        task = self.setup.task
        res = minimize(
            lambda w: task.loss(w, data),
            np.zeros(task.num_params),
            jac=lambda w: task.gradient(w, data),
            method="L-BFGS-B",
            options={"maxiter": 5000, "gtol": 1e-10, "ftol": 1e-15},
        )
        return float(res.fun)

    def union_loss(self, w) -> float:
        task = self.setup.task
        if task.kind == "quadratic":
            return task.weighted_loss(w, self.union_w)
        return task.loss(w, self.merged)

    def population_loss(self, w) -> float:
        return self.setup.population.loss(w) if self.setup.task.kind == "quadratic" else self.setup.task.loss(w, self.setup.population)

    def own_gap(self, w, weights) -> float:
        task = self.setup.task
        if task.kind != "quadratic":
            return math.nan
        key = np.asarray(weights).tobytes()
        if key not in self._own_cache:
            ws = task.minimizer(weights)
            self._own_cache = {key: (ws, task.weighted_loss(ws, weights))}
        ws, fmin = self._own_cache[key]
        return task.weighted_loss(w, weights) - fmin


def _allocator(cfg: dict, K: int, seed: int):
    pc = cfg["privacy"]
    T = int(cfg["num_rounds"])
    if pc["mode"] == "lapa":
        lc = cfg["lapa"]
        pid = PidConfig(float(lc["kp"]), float(lc["ks"]), int(lc["window"]), lc["sampling"])
        return LapaAllocator(K, float(pc["eps_total"]), T, float(pc["delta_dp"]), pid, float(lc["beta"]),
                             float(pc["eps_floor"]), np.random.default_rng([seed, 7]))
    if pc["mode"] == "uniform":
        return UniformAllocator(K, float(pc["eps_total"]), T, float(pc["delta_dp"]), float(pc["eps_floor"]))
    return None


def run_simulation(cfg: dict, seed: int, power: PowerAllocation | None = None) -> SimulationResult:
    """Run ``num_rounds`` federated rounds; raises ``RunFailure`` on a broken run."""
    if power is None and cfg["wireless"]["power"]["mode"] == "optimize":
        power = optimize_allocation(cfg, seed).best_power
    setup = build_setup(cfg, seed, power)
    task, K = setup.task, setup.sizes.size
    T = int(cfg["num_rounds"])
    lr = float(cfg["task"]["learning_rate"])
    pc = cfg["privacy"]
    private = pc["mode"] != "none"
    clip = float(pc["clip"])
    allocator = _allocator(cfg, K, seed)
    controller = control.NoiseController(enabled=bool(pc["switching"]))
    sinrs = sinr_all(setup.power, setup.channel, float(cfg["wireless"]["sinr_cap"]))
    chan_std = effective_noise_stds(setup.power, setup.channel)
    channel_level = float(np.sum(chan_std))
    ds = np.array([sensitivity(lr, clip, int(n)) for n in setup.sizes])
    c = calibration_constant(float(pc["delta_dp"]))
    rng_dp = np.random.default_rng([seed, 3])
    rng_ch = np.random.default_rng([seed, 4])
    data = setup.datasets
    obj = _Objective(setup)

    w = setup.w0.copy()
    angles = None
    traces: list[RoundTrace] = []
    eps_rows = []
    w0 = compute_weights(setup.pmfs, setup.global_pmf, setup.sizes, sinrs, setup.policy)
    if w0.empty:
        # SINRs are fixed for the run, so every round would be empty
        raise RunFailure("empty_selection", "no device cleared the SINR threshold", round=1, seed=seed)
    g0 = w0.g
    initial_gap = obj.population_loss(w) - obj.pop_min
    initial_own = obj.own_gap(w, g0)
    for t in range(1, T + 1):
        raw = [task.gradient(w, data[k], k) for k in range(K)]
        local = [clip_gradient(g, clip) for g in raw] if private else raw
        if allocator is not None:
            try:
                eps = allocator.budgets(t)
            except DomainError as exc:
                raise RunFailure("budget_exhausted", str(exc), round=t, seed=seed) from exc
            sig = ds * c / eps
            art_level = float(np.sum(sig))
            mode = controller.check_switch(t, art_level, channel_level)
            if mode == control.CHANNEL_ONLY:
                sig_used = np.zeros(K)
            else:
                sig_used = sig
            eps_rows.append(eps)
        else:
            eps = np.full(K, math.nan)
            sig_used = np.zeros(K)
            art_level = 0.0
            mode = control.CHANNEL_ONLY
        z_dp = rng_dp.standard_normal((K, w.size))
        z_ch = rng_ch.standard_normal((K, w.size))
        received = [local[k] + sig_used[k] * z_dp[k] + chan_std[k] * z_ch[k] for k in range(K)]
        weights = compute_weights(setup.pmfs, setup.global_pmf, setup.sizes, sinrs, setup.policy, angles)
        if weights.empty:
            raise RunFailure("empty_selection", "no device cleared the SINR threshold", round=t, seed=seed)
        g = aggregate(received, weights)
        angles = np.array([gradient_angle(g, r) for r in received])
        if allocator is not None:
            allocator.observe(g, received)
        clean = aggregate(raw, weights)
        dissim = control.estimate_delta([raw[k] for k in range(K)], clean, weights.g)
        w = global_update(w, g, lr)
        loss = obj.population_loss(w)
        if not math.isfinite(loss) or not np.all(np.isfinite(w)):
            raise RunFailure("non_finite", "loss or parameters became non-finite", round=t, seed=seed)
        ledger = allocator.ledger if allocator is not None else None
        traces.append(
            RoundTrace(
                seed,
                t,
                loss,
                loss - obj.pop_min,
                obj.union_loss(w) - obj.union_min,
                obj.own_gap(w, weights.g),
                float(np.linalg.norm(g)),
                math.nan if dissim is None else dissim,
                ledger.eps_round[-1] if ledger else math.nan,
                ledger.eps_consumed if ledger else math.nan,
                getattr(allocator, "last_error", math.nan) if allocator is not None else math.nan,
                mode,
                controller.t_th,
                art_level,
                channel_level,
                int(np.sum(weights.selected)),
                eps,
                sig_used,
                weights.g,
                sinrs,
            )
        )
    eps_arr = np.vstack(eps_rows) if eps_rows else np.zeros((0, K))
    return SimulationResult(traces, eps_arr, controller.t_th, setup, initial_gap, initial_own)


# -- bound evaluation on a finished run -----------------------------------------


def bound_inputs_for_run(res: SimulationResult, delta: float | None = None) -> tuple[control.BoundInputs, float]:
    """Bound inputs and initial gap from a finished run's weights, budgets and ``T_th``.

    ``delta`` defaults to the largest per-round dissimilarity seen in the run.
    """
    setup, cfg = res.setup, res.setup.cfg
    task = setup.task
    if task.kind == "quadratic":
        mu, L = task.device_constants()
    else:
        mu, L = task.constants(setup.datasets)
    if delta is None:
        vals = [r.dissimilarity for r in res.traces if math.isfinite(r.dissimilarity)]
        delta = max(vals) if vals else 1.0
    G = res.traces[0].weight
    T = len(res.traces)
    lr = float(cfg["task"]["learning_rate"])
    ds = np.array([sensitivity(lr, float(cfg["privacy"]["clip"]), int(n)) for n in setup.sizes])
    if res.eps_rows.shape[0]:
        eps = res.eps_rows
        n_art = res.t_th if res.t_th is not None else T
    else:
        eps = np.ones((T, G.size))
        n_art = 0
    inp = control.BoundInputs.from_channel(mu, L, delta, lr, G, setup.power, setup.channel, ds,
                                           float(cfg["privacy"]["delta_dp"]), eps, T, n_art)
    gap0 = res.initial_own_gap if math.isfinite(res.initial_own_gap) else res.initial_gap
    return inp, gap0


def bound_for_run(res: SimulationResult, delta: float | None = None) -> control.BoundTerms:
    inp, gap0 = bound_inputs_for_run(res, delta)
    return control.convergence_bound(inp, gap0)


# -- power optimisation -------------------------------------------------------------


def optimize_allocation(cfg: dict, seed: int):
    """Search transmit powers for ``cfg`` with the actor-critic optimiser.

    The budget trajectory (frozen mode), weights and ``delta`` come from a
    reference run at the configured equal power without switching.
    """
    from .ddpg.agent import AgentConfig
    from .ddpg.env import NoiseObjectiveEnv, optimize_power

    ref_cfg = json.loads(canonical_json(cfg))
    ref_cfg["wireless"]["power"]["mode"] = "equal"
    ref_cfg["privacy"]["switching"] = False
    if ref_cfg["privacy"]["mode"] == "none":
        ref_cfg["privacy"]["mode"] = "lapa"
    ref = run_simulation(ref_cfg, seed)
    setup = ref.setup
    task = setup.task
    mu, L = task.device_constants() if task.kind == "quadratic" else task.constants(setup.datasets)
    dc = cfg["ddpg"]
    delta = dc["delta"]
    if delta is None:
        vals = [r.dissimilarity for r in ref.traces if math.isfinite(r.dissimilarity)]
        delta = max(vals) if vals else 1.0
    lr = float(cfg["task"]["learning_rate"])
    ds = np.array([sensitivity(lr, float(cfg["privacy"]["clip"]), int(n)) for n in setup.sizes])
    pc = cfg["wireless"]["power"]
    budget_fn = None
    if dc["env_mode"] == "live":
        def budget_fn(power):
            return run_simulation(ref_cfg, seed, power).eps_rows
    env = NoiseObjectiveEnv(
        setup.channel, ref.traces[0].weight, mu, L, float(delta), lr, ds, float(cfg["privacy"]["delta_dp"]),
        ref.eps_rows, float(pc["p_min_total"]), float(pc["p_max_total"]), True, budget_fn,
    )
    agent_cfg = AgentConfig(
        discount=float(dc["discount"]), tau=float(dc["tau"]), noise_start=float(dc["noise_start"]),
        noise_end=float(dc["noise_end"]), batch_size=int(dc["batch_size"]), buffer_size=int(dc["buffer_size"]),
        episodes=int(dc["episodes"]), steps_per_episode=int(dc["steps_per_episode"]),
        actor_lr=float(dc["actor_lr"]), critic_lr=float(dc["critic_lr"]), warmup=int(dc["warmup"]), seed=seed,
    )
    return optimize_power(env, agent_cfg)


# -- output ---------------------------------------------------------------------------


def provenance() -> str:
    """``dpwfl-<version>`` plus the source commit when run from a git checkout."""
    tag = f"dpwfl-{__version__}+{kernels.BACKEND}"
    try:
        sha = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if sha.returncode == 0 and sha.stdout.strip():
            tag += f".g{sha.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return tag


def write_trace_csv(path, traces: list[RoundTrace], num_devices: int) -> str:
    """Write the trace CSV and return its SHA-256."""
    lines = [",".join(trace_columns(num_devices))]
    lines += [",".join(r.row()) for r in traces]
    data = ("\n".join(lines) + "\n").encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def _run_cell_seed(args):
    cell_cfg, seed, out_dir = args
    name = cell_cfg["name"]
    try:
        res = run_simulation(cell_cfg, seed)
    except RunFailure as exc:
        return {"cell": name, "seed": seed, "status": "failed", **exc.report}
    row = {
        "cell": name,
        "seed": seed,
        "status": "ok",
        "final_loss": res.traces[-1].global_loss,
        "final_gap": res.traces[-1].gap,
        "final_own_gap": res.traces[-1].own_gap,
        "t_th": res.t_th,
        "eps_spent": float(np.nansum([r.eps_round for r in res.traces])),
        "rows": len(res.traces),
    }
    if cell_cfg["task"]["kind"] == "quadratic":
        b = bound_for_run(res)
        row["bound_total"] = b.total
        row["contraction"] = b.contraction
        row["bound_diverges"] = b.diverges
    if out_dir is not None:
        cdir = Path(out_dir) / name
        cdir.mkdir(parents=True, exist_ok=True)
        fname = f"trace_seed{seed}.csv"
        row["csv"] = f"{name}/{fname}"
        row["sha256"] = write_trace_csv(cdir / fname, res.traces, res.setup.sizes.size)
    return row


def _summ(vals):
    arr = np.array([v for v in vals if v is not None and math.isfinite(v)], dtype=float)
    if arr.size == 0:
        return {"mean": math.nan, "std": math.nan, "n": 0}
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0, "n": int(arr.size)}


@dataclass
class SuiteResult:
    runs: list[dict] = field(default_factory=list)
    cells: dict = field(default_factory=dict)

    def finals(self, cell: str, key: str = "final_gap") -> dict[int, float]:
        return {r["seed"]: r[key] for r in self.runs if r["cell"] == cell and r["status"] == "ok"}


def run_suite(cfg: dict, cells=None, seeds=None, threads: int = 1, out_dir=None) -> SuiteResult:
    """Run every requested cell over every seed; failures are reported per run."""
    names = list(cells) if cells else cell_names(cfg)
    seeds = list(seeds) if seeds is not None else list(cfg["seeds"])
    jobs = [(resolve_cell(cfg, n), s, out_dir) for n in names for s in seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(_run_cell_seed, jobs))
    else:
        runs = [_run_cell_seed(j) for j in jobs]
    result = SuiteResult(runs)
    for n in names:
        ok = [r for r in runs if r["cell"] == n and r["status"] == "ok"]
        summary = {
            "seeds": len(seeds),
            "failed": sum(1 for r in runs if r["cell"] == n and r["status"] != "ok"),
            "final_loss": _summ([r["final_loss"] for r in ok]),
            "final_gap": _summ([r["final_gap"] for r in ok]),
            "final_own_gap": _summ([r["final_own_gap"] for r in ok]),
            "t_th": [r["t_th"] for r in ok],
        }
        if ok and "bound_total" in ok[0]:
            summary["bound_vs_measured"] = {
                "bound_total": _summ([r["bound_total"] for r in ok]),
                "diverged": sum(1 for r in ok if r["bound_diverges"]),
                "contraction": _summ([r["contraction"] for r in ok]),
                "measured_final_own_gap": summary["final_own_gap"],
            }
        result.cells[n] = summary
    return result


def write_manifest(out_dir, cfg: dict, runs: list[dict], command: str) -> Path:
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "provenance": provenance(),
        "schema_version": cfg["schema_version"],
        "runs": [
            {k: r.get(k) for k in ("cell", "seed", "status", "csv", "sha256")} | {"config_hash": config_hash(resolve_cell(cfg, r["cell"]))}
            for r in runs
        ],
    }
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
