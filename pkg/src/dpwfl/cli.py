"""Command-line experiment runner.

Subcommands: ``simulate``, ``suite``, ``optimize``, ``bound`` and
``partition-report``. Results go to stdout as JSON; files go under ``--out``.
Failures exit nonzero and print ``{"error": ..., "message": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import control, simulation
from .aggregation import WeightPolicy, compute_weights, wasserstein_1d
from .config import cell_names, config_hash, from_dict, load_config, resolve_cell
from .errors import ConfigError, DomainError, RunFailure

EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_PARTIAL = 4
EXIT_INTERNAL = 1


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _emit(obj) -> None:
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def _fail(kind: str, message: str, code: int, **details) -> int:
    sys.stderr.write(json.dumps(_jsonable({"error": kind, "message": message, **details}), sort_keys=True) + "\n")
    return code


def _load(args) -> dict:
    return load_config(args.config) if args.config else from_dict({})


def _one_cell(cfg: dict, name: str | None) -> dict:
    names = cell_names(cfg)
    return resolve_cell(cfg, name if name is not None else names[0])


def _seed(args, cfg: dict) -> int:
    return args.seed if args.seed is not None else int(cfg["seeds"][0])


def _out(args) -> Path | None:
    if args.out is None:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- subcommands ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load(args)
    cell = _one_cell(cfg, args.cell)
    seed = _seed(args, cfg)
    res = simulation.run_simulation(cell, seed)
    last = res.traces[-1]
    out = _out(args)
    summary = {
        "cell": cell["name"],
        "seed": seed,
        "rounds": len(res.traces),
        "final_loss": last.global_loss,
        "final_gap": last.gap,
        "final_train_gap": last.train_gap,
        "final_own_gap": last.own_gap,
        "t_th": res.t_th,
        "eps_consumed": last.eps_consumed,
        "config_hash": config_hash(cell),
    }
    if out is not None:
        cdir = out / cell["name"]
        cdir.mkdir(parents=True, exist_ok=True)
        sha = simulation.write_trace_csv(cdir / f"trace_seed{seed}.csv", res.traces, res.setup.sizes.size)
        row = {"cell": cell["name"], "seed": seed, "status": "ok", "csv": f"{cell['name']}/trace_seed{seed}.csv", "sha256": sha}
        simulation.write_manifest(out, cfg, [row], "simulate")
        summary["csv"] = row["csv"]
    _emit(summary)
    return 0


def cmd_suite(args) -> int:
    cfg = _load(args)
    cells = [args.cell] if args.cell else None
    seeds = [args.seed] if args.seed is not None else None
    out = _out(args)
    res = simulation.run_suite(cfg, cells=cells, seeds=seeds, threads=args.threads, out_dir=out)
    if out is not None:
        simulation.write_manifest(out, cfg, res.runs, "suite")
        (out / "summary.json").write_text(json.dumps(_jsonable(res.cells), indent=2, sort_keys=True) + "\n")
    _emit({"cells": res.cells, "config_hash": config_hash(cfg)})
    failed = [r for r in res.runs if r["status"] != "ok"]
    if failed:
        return _fail("partial_failure", f"{len(failed)} of {len(res.runs)} runs failed", EXIT_PARTIAL, runs=failed)
    return 0


def cmd_optimize(args) -> int:
    cfg = _load(args)
    cell = _one_cell(cfg, args.cell)
    seed = _seed(args, cfg)
    res = simulation.optimize_allocation(cell, seed)
    payload = {
        "cell": cell["name"],
        "seed": seed,
        "best_amplitudes": res.best_power.p,
        "best_total_power": res.best_power.total,
        "best_t_th": res.best_t_th,
        "best_reward": res.best_reward,
        "rewards": res.rewards,
    }
    out = _out(args)
    if out is not None:
        K = res.best_power.p.size
        lines = [",".join(["episode", "step", "reward", "objective", "t_th"] + [f"p_{k}" for k in range(K)])]
        for r in res.trace:
            lines.append(",".join([str(r.episode), str(r.step), repr(float(r.reward)), repr(float(r.objective)), str(r.t_th)]
                                  + [repr(float(v)) for v in r.powers]))
        (out / f"optimize_seed{seed}.csv").write_text("\n".join(lines) + "\n")
        (out / f"optimize_seed{seed}.json").write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    _emit(payload)
    return 0


def cmd_bound(args) -> int:
    cfg = _load(args)
    if args.check:
        from .boundcheck import BoundCheckConfig, check_bound

        bc = BoundCheckConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg["bound"].items()})
        if args.seed is not None:
            bc = dataclasses.replace(bc, seed=args.seed)
        results = check_bound(bc)
        payload = {"levels": [r.summary() for r in results], "violations": sum(r.violations for r in results)}
        _emit(payload)
        return 0 if payload["violations"] == 0 else _fail("bound_violated", "measured gap exceeded the bound", EXIT_RUN)
    cell = _one_cell(cfg, args.cell)
    if cell["task"]["kind"] != "quadratic":
        raise ConfigError("bound needs a quadratic task")
    seed = _seed(args, cfg)
    res = simulation.run_simulation(cell, seed)
    inp, gap0 = simulation.bound_inputs_for_run(res)
    terms = control.convergence_bound(inp, gap0)
    _emit({
        "cell": cell["name"],
        "seed": seed,
        "t_th": res.t_th,
        "inputs": {
            "mu": inp.mu,
            "L": inp.L,
            "delta": inp.delta,
            "learning_rate": inp.lr,
            "max_learning_rate": control.max_learning_rate(inp.L, inp.delta, inp.weights),
            "initial_gap": gap0,
        },
        "final_own_gap": res.traces[-1].own_gap,
        **terms.as_dict(),
    })
    return 0


def cmd_partition_report(args) -> int:
    cfg = _load(args)
    cell = _one_cell(cfg, args.cell)
    setup = simulation.build_setup(cell, _seed(args, cfg))
    W = [wasserstein_1d(p, setup.global_pmf) for p in setup.pmfs]
    ones = np.full(setup.sizes.size, np.inf)
    wass = compute_weights(setup.pmfs, setup.global_pmf, setup.sizes, ones, WeightPolicy("wasserstein", 0.0)).g
    fed = compute_weights(setup.pmfs, setup.global_pmf, setup.sizes, ones, WeightPolicy("fedavg", 0.0)).g
    header = ["device", "size", "labels", "W_k", "G_wasserstein", "G_fedavg"]
    rows = []
    for k in range(setup.sizes.size):
        labels = " ".join(str(z) for z in np.flatnonzero(setup.pmfs[k] > 0))
        rows.append([str(k), str(int(setup.sizes[k])), labels, f"{W[k]:.6f}", f"{wass[k]:.6f}", f"{fed[k]:.6f}"])
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    out = _out(args)
    if out is not None:
        (out / "partition_report.csv").write_text("\n".join(",".join(r) for r in [header] + rows) + "\n")
    return 0


# -- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML experiment config (defaults if omitted)")
    common.add_argument("--seed", type=int, metavar="N", help="run only this seed")
    common.add_argument("--out", metavar="DIR", help="output directory for CSV/JSON files")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker processes for suites")
    common.add_argument("--cell", metavar="NAME", help="config cell to run")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dpwfl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="one (cell, seed) run").set_defaults(func=cmd_simulate)
    sub.add_parser("suite", parents=[common], help="all cells over all seeds").set_defaults(func=cmd_suite)
    sub.add_parser("optimize", parents=[common], help="search transmit powers").set_defaults(func=cmd_optimize)
    b = sub.add_parser("bound", parents=[common], help="convergence-bound decomposition")
    b.add_argument("--check", action="store_true", help="run the bound-validity harness instead")
    b.set_defaults(func=cmd_bound)
    sub.add_parser("partition-report", parents=[common], help="per-device W_k table").set_defaults(func=cmd_partition_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        return _fail("config_error", "--threads must be >= 1", EXIT_CONFIG)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config_error", str(exc), EXIT_CONFIG)
    except RunFailure as exc:
        sys.stderr.write(json.dumps(_jsonable(exc.report), sort_keys=True) + "\n")
        return EXIT_RUN
    except DomainError as exc:
        return _fail("domain_error", str(exc), EXIT_RUN)
    except (OSError, TypeError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
