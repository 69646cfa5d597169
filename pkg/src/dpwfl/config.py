"""Experiment configuration: defaults, YAML loading, cells and validation.

A config file is a YAML mapping. Any key left out takes its value from
``DEFAULTS``. The optional ``cells`` mapping names variants of the base
config; each cell is a partial mapping deep-merged over the base.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1

DEFAULTS: dict = {
    "schema_version": SCHEMA_VERSION,
    "name": "experiment",
    "seeds": [0],
    "num_rounds": 100,
    "task": {
        "kind": "quadratic",  # quadratic | logistic
        "dim": 5,  # quadratic parameter dimension
        "mu": 1.0,
        "L": 10.0,
        "target_scale": 1.0,
        "l2_reg": 0.01,  # logistic only
        "learning_rate": 0.05,
        "init_scale": 1.0,
        "eval_size": 2000,  # logistic held-out sample
    },
    "partition": {
        "num_devices": 15,
        "num_classes": 10,
        "iid_count": 3,
        "labels_per_noniid_device": 2,
        "sizes": 100,  # int (same for all) or list
        "feature_dim": 5,
        "separation": 3.0,
        "seed": None,  # None: derived from the run seed
    },
    "wireless": {
        "num_antennas": 15,
        "noise_power": 1e-3,  # sigma_n0^2 in W
        "carrier_hz": 915e6,
        "path_exponent": 3.76,
        "gain_bs_dbi": 5.0,
        "gain_device_dbi": 0.0,
        "bs_position": [-50.0, 0.0, 10.0],
        "in_region_one": 7,
        "seed": None,  # layout and fading; None: derived from the run seed
        "sinr_cap": 1e12,
        "power": {
            "mode": "equal",  # equal | explicit | optimize
            "total": None,  # None: p_max_total / 2
            "values": None,  # explicit amplitudes
            "p_min_total": 0.0,
            "p_max_total": 2e11,
        },
    },
    "privacy": {
        "mode": "lapa",  # lapa | uniform | none
        "eps_total": 10.0,
        "delta_dp": 0.01,
        "clip": 1.0,
        "eps_floor": 1e-4,
        "switching": False,
    },
    "lapa": {"kp": 1.0, "ks": 0.5, "window": 5, "sampling": "window", "beta": 1.0},
    "aggregation": {
        "policy": "wasserstein",  # wasserstein | fedavg | angle
        "gamma_th": 0.0,
        "ser": None,  # SER preset overriding gamma_th
        "modulation": "bpsk",
    },
    "ddpg": {
        "discount": 0.99,
        "tau": 0.001,
        "noise_start": 0.2,
        "noise_end": 0.02,
        "batch_size": 64,
        "buffer_size": 10000,
        "episodes": 30,
        "steps_per_episode": 50,
        "actor_lr": 1e-3,
        "critic_lr": 1e-3,
        "warmup": 100,
        "env_mode": "frozen",  # frozen | live
        "delta": None,  # None: estimated from a reference run
    },
    "bound": {},  # overrides of BoundCheckConfig
    "output": {"float_format": "repr"},
    "cells": {},
}

_CHOICES = {
    ("task", "kind"): ("quadratic", "logistic"),
    ("wireless", "power", "mode"): ("equal", "explicit", "optimize"),
    ("privacy", "mode"): ("lapa", "uniform", "none"),
    ("aggregation", "policy"): ("wasserstein", "fedavg", "angle"),
    ("aggregation", "modulation"): ("bpsk", "qpsk"),
    ("lapa", "sampling"): ("window", "random"),
    ("ddpg", "env_mode"): ("frozen", "live"),
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _check_keys(cfg: dict, ref: dict, path: str = "") -> None:
    for key, val in cfg.items():
        if key not in ref:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(ref[key], dict) and ref[key] and key != "cells":
            if not isinstance(val, dict):
                raise ConfigError(f"{path + key!r} must be a mapping")
            _check_keys(val, ref[key], path + key + ".")


def _get(cfg, path):
    for p in path:
        cfg = cfg[p]
    return cfg


def validate(cfg: dict) -> dict:
    """Check types, ranges and cross-field consistency; returns ``cfg``."""
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg.get('schema_version')!r}")
    _check_keys(cfg, DEFAULTS)
    for path, allowed in _CHOICES.items():
        if _get(cfg, path) not in allowed:
            raise ConfigError(f"{'.'.join(path)} must be one of {allowed}")
    if not cfg["seeds"] or not all(isinstance(s, int) and s >= 0 for s in cfg["seeds"]):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    if int(cfg["num_rounds"]) < 1:
        raise ConfigError("num_rounds must be >= 1")
    part = cfg["partition"]
    K = int(part["num_devices"])
    sizes = part["sizes"]
    if isinstance(sizes, list) and len(sizes) != K:
        raise ConfigError(f"partition.sizes lists {len(sizes)} devices, num_devices is {K}")
    pw = cfg["wireless"]["power"]
    if pw["mode"] == "explicit" and (pw["values"] is None or len(pw["values"]) != K):
        raise ConfigError("wireless.power.values needs one amplitude per device")
    if not 0 <= pw["p_min_total"] <= pw["p_max_total"]:
        raise ConfigError("need 0 <= p_min_total <= p_max_total")
    if cfg["wireless"]["noise_power"] < 0:
        raise ConfigError("wireless.noise_power must be non-negative")
    priv = cfg["privacy"]
    if not 0 < priv["delta_dp"] < 1:
        raise ConfigError("privacy.delta_dp must lie in (0, 1)")
    if priv["clip"] <= 0 or priv["eps_total"] <= 0:
        raise ConfigError("privacy.clip and privacy.eps_total must be positive")
    task = cfg["task"]
    if task["learning_rate"] <= 0:
        raise ConfigError("task.learning_rate must be positive")
    if task["kind"] == "quadratic" and not 0 < task["mu"] <= task["L"]:
        raise ConfigError("quadratic task needs 0 < mu <= L")
    if task["kind"] == "logistic" and task["l2_reg"] <= 0:
        raise ConfigError("logistic task needs l2_reg > 0 for strong convexity")
    if cfg["aggregation"]["gamma_th"] < 0:
        raise ConfigError("aggregation.gamma_th must be non-negative")
    if not isinstance(cfg["cells"], dict):
        raise ConfigError("cells must be a mapping of name -> overrides")
    return cfg


def from_dict(raw: dict | None) -> dict:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    return validate(deep_merge(DEFAULTS, raw))


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(p)!r}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {str(p)!r}: {exc}") from exc
    return from_dict(raw)


def cell_names(cfg: dict) -> list[str]:
    return list(cfg["cells"]) or [cfg["name"]]


def resolve_cell(cfg: dict, name: str | None) -> dict:
    """Base config with the named cell's overrides applied (``cells`` removed)."""
    base = {k: v for k, v in cfg.items() if k != "cells"}
    if name is None or (not cfg["cells"] and name == cfg["name"]):
        out = copy.deepcopy(base)
        out["cells"] = {}
        return out
    if name not in cfg["cells"]:
        raise ConfigError(f"unknown cell {name!r}; available: {cell_names(cfg)}")
    out = deep_merge(base, cfg["cells"][name] or {})
    out["name"] = name
    out["cells"] = {}
    return validate(out)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def canonical_json(cfg: dict) -> str:
    return json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
