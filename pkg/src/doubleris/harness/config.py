"""Experiment configuration: YAML files merged over per-experiment defaults."""

import copy
import hashlib
import json
import math

import numpy as np
import yaml

from ..channel import ChannelParams, UpaSpec
from ..geometry import LINKS, build_scenario, dbm_to_watts
from ..optimizer import AdmmSettings, AoSettings

EXPERIMENTS = ("fig4", "fig5", "fig6", "fig7", "fig8", "custom")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


BASE = {
    "scenario": {"d1": 100.0, "d2": 200.0, "dH": 2.0},
    "system": {
        "Nt": 16,
        "Nr": 16,
        "ris1": {"kv": 8, "kh": 8},
        "ris2": {"kv": 8, "kh": 8},
        "Ns": None,
    },
    "channel": {
        "kappa": 0.0,
        "n_scatterers": 15,
        "spread_tx": math.pi / 3,
        "spread_rx": math.pi / 3,
        "spread_ris": math.pi / 3,
        "spread_scatter": math.pi / 3,
        "antenna_spacing": 0.5,
        "ris_spacing": 0.5,
        "scatter_spacing": 0.5,
    },
    "power": {"P_dbm": 30.0, "sigma2_dbm": -90.0},
    "optimizer": {
        "epsilon": 1e-5,
        "max_outer": 50,
        "warm_start": True,
        "rho_factor": 1.5 * math.sqrt(2.0),
        "max_iters": 1000,
        "tol": 1e-5,
        "max_unconverged_fraction": 0.05,
    },
    "sweep": {"variable": None, "values": []},
    "trials": 1000,
    "seed": 20240607,
    "outputs": {"directory": "results", "formats": ["csv"]},
    "experiment": {},
}

# Per-experiment overrides of BASE; "experiment" holds experiment-only knobs.
EXPERIMENT_DEFAULTS = {
    "fig4": {
        "channel": {"n_scatterers": 3},
        "sweep": {"variable": "system.K", "values": [4, 16, 36, 64, 100]},
        "experiment": {"los_kappa": "inf", "nlos_kappa": 0.0},
    },
    "fig5": {
        "channel": {"kappa": 0.0, "n_scatterers": 15},
    },
    "fig6": {
        "sweep": {"variable": "system.K", "values": [16, 36, 64, 100]},
        "experiment": {
            "geometries": [[100.0, 200.0], [20.0, 5.0]],
            "kappas": [0.0, 10.0],
        },
    },
    "fig7": {
        "system": {"ris1": {"kv": 4, "kh": 4}, "ris2": {"kv": 4, "kh": 4}},
        "channel": {"kappa": 0.0},
        "sweep": {"variable": "channel.n_scatterers", "values": [1, 3, 5, 10, 15, 30]},
        "trials": 200,
        "experiment": {"geometries": [[100.0, 200.0], [5.0, 50.0]]},
    },
    "fig8": {
        "system": {"Ns": 1},
        "channel": {"kappa": 4.0, "n_scatterers": 15},
        "sweep": {"variable": "snr_db", "values": [110.0 + 2.0 * i for i in range(10)]},
        "trials": 100,
        "experiment": {"qam_order": 16, "n_symbols": 20000, "ser_mode": "per_stream"},
    },
    "custom": {
        "sweep": {"variable": "channel.n_scatterers", "values": [5, 15]},
        "trials": 50,
        "experiment": {"metric": "capacity"},
    },
}


def deep_merge(base, override):
    """Recursively merge ``override`` into a copy of ``base``."""
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and out[key]:
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_keys(tree, template, path=""):
    for key, value in tree.items():
        where = f"{path}{key}"
        if key not in template:
            raise ConfigError(f"unknown config field '{where}'")
        sub = template[key]
        # free-form subtrees: experiment knobs and per-link dicts
        if key in ("experiment",) or not isinstance(sub, dict) or not sub:
            continue
        if isinstance(value, dict):
            _check_keys(value, sub, where + ".")


def _parse_kappa(value):
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", ".inf"):
            return math.inf
        raise ConfigError(f"Rician factor must be a number or 'inf', got {value!r}")
    return float(value)


def get_path(tree, path):
    node = tree
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"sweep variable '{path}' does not name a config field")
        node = node[part]
    return node


def set_path(tree, path, value):
    """Copy of ``tree`` with ``path`` set. ``system.K`` sets both surfaces to
    square ``sqrt(K) x sqrt(K)`` arrays; ``snr_db`` is handled by fig8."""
    out = copy.deepcopy(tree)
    if path == "system.K":
        side = int(round(math.sqrt(value)))
        if side * side != int(value):
            raise ConfigError(f"system.K sweep values must be perfect squares, got {value}")
        out["system"]["ris1"] = {"kv": side, "kh": side}
        out["system"]["ris2"] = {"kv": side, "kh": side}
        return out
    get_path(out, path)
    parts = path.split(".")
    node = out
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value
    return out


class ExperimentConfig:
    """Validated configuration tree for one experiment run."""

    def __init__(self, experiment, tree):
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment '{experiment}'")
        self.experiment = experiment
        self.tree = tree
        self.validate()

    # -- construction -----------------------------------------------------
    @classmethod
    def load(cls, experiment, path=None, overrides=None):
        tree = deep_merge(BASE, EXPERIMENT_DEFAULTS.get(experiment, {}))
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    user = yaml.safe_load(fh) or {}
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except yaml.YAMLError as exc:
                raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
            if not isinstance(user, dict):
                raise ConfigError(f"config {path} must be a mapping at top level")
            _check_keys(user, BASE)
            tree = deep_merge(tree, user)
        for key, value in (overrides or {}).items():
            if value is not None:
                tree = set_path(tree, key, value) if "." in key else {**tree, key: value}
        return cls(experiment, tree)

    def with_value(self, path, value):
        return ExperimentConfig(self.experiment, set_path(self.tree, path, value))

    def with_tree(self, **sections):
        return ExperimentConfig(self.experiment, deep_merge(self.tree, sections))

    # -- validation -------------------------------------------------------
    def validate(self):
        t = self.tree
        try:
            sc = t["scenario"]
            build_scenario(float(sc["d1"]), float(sc["d2"]), float(sc["dH"]))
            self.channel_params()
            self.ao_settings()
            self.admm_settings()
            if not isinstance(t["trials"], int) or isinstance(t["trials"], bool) or t["trials"] < 1:
                raise ConfigError("trials must be a positive integer")
            if not isinstance(t["seed"], int) or isinstance(t["seed"], bool) or t["seed"] < 0:
                raise ConfigError("seed must be a non-negative integer")
            if t["seed"] >= 2**64:
                raise ConfigError("seed must fit in 64 bits")
            self.n_streams
            self.power_watts
            frac = float(t["optimizer"]["max_unconverged_fraction"])
            if not 0.0 <= frac <= 1.0:
                raise ConfigError("optimizer.max_unconverged_fraction must lie in [0, 1]")
            sweep = t["sweep"]
            if sweep["variable"] not in (None, "system.K", "snr_db"):
                get_path(t, sweep["variable"])
            if not isinstance(sweep["values"], list):
                raise ConfigError("sweep.values must be a list")
            fmts = t["outputs"]["formats"]
            if isinstance(fmts, str):
                fmts = [fmts]
            if not set(fmts) <= {"csv", "json"}:
                raise ConfigError("outputs.formats may only contain 'csv' and 'json'")
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    # -- typed views ------------------------------------------------------
    def layout(self, d1=None, d2=None):
        sc = self.tree["scenario"]
        return build_scenario(
            float(sc["d1"] if d1 is None else d1),
            float(sc["d2"] if d2 is None else d2),
            float(sc["dH"]),
        )

    def channel_params(self, **changes):
        s, c = self.tree["system"], self.tree["channel"]
        kappa = c["kappa"]
        kappa = {k: _parse_kappa(kappa[k]) for k in LINKS} if isinstance(kappa, dict) else _parse_kappa(kappa)
        n_sc = c["n_scatterers"]
        n_sc = {k: int(n_sc[k]) for k in LINKS} if isinstance(n_sc, dict) else int(n_sc)
        spacing = float(c["ris_spacing"])
        kw = dict(
            nt=int(s["Nt"]),
            nr=int(s["Nr"]),
            ris1=UpaSpec(int(s["ris1"]["kv"]), int(s["ris1"]["kh"]), spacing, spacing),
            ris2=UpaSpec(int(s["ris2"]["kv"]), int(s["ris2"]["kh"]), spacing, spacing),
            antenna_spacing=float(c["antenna_spacing"]),
            kappa=kappa,
            n_scatterers=n_sc,
            spread_tx=float(c["spread_tx"]),
            spread_rx=float(c["spread_rx"]),
            spread_ris=float(c["spread_ris"]),
            spread_scatter=float(c["spread_scatter"]),
            scatter_spacing=float(c["scatter_spacing"]),
        )
        kw.update(changes)
        for name in ("spread_tx", "spread_rx", "spread_ris", "spread_scatter"):
            if not 0.0 <= kw[name] <= math.pi:
                raise ConfigError(f"channel.{name} must lie in [0, pi]")
        try:
            return ChannelParams(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def ao_settings(self):
        o = self.tree["optimizer"]
        try:
            return AoSettings(float(o["epsilon"]), int(o["max_outer"]), bool(o["warm_start"]))
        except ValueError as exc:
            raise ConfigError(f"optimizer: {exc}") from exc

    def admm_settings(self):
        o = self.tree["optimizer"]
        try:
            return AdmmSettings(float(o["rho_factor"]), int(o["max_iters"]), float(o["tol"]))
        except ValueError as exc:
            raise ConfigError(f"optimizer: {exc}") from exc

    @property
    def n_streams(self):
        s = self.tree["system"]
        full = min(int(s["Nt"]), int(s["Nr"]))
        ns = s["Ns"]
        if ns is None:
            return full
        if not isinstance(ns, int) or not 1 <= ns <= full:
            raise ConfigError(f"system.Ns must be an integer in [1, {full}], got {ns!r}")
        return ns

    @property
    def power_watts(self):
        p = self.tree["power"]
        return dbm_to_watts(float(p["P_dbm"])), dbm_to_watts(float(p["sigma2_dbm"]))

    @property
    def trials(self):
        return int(self.tree["trials"])

    @property
    def seed(self):
        return int(self.tree["seed"])

    @property
    def options(self):
        return self.tree["experiment"]

    @property
    def sweep(self):
        return self.tree["sweep"]["variable"], list(self.tree["sweep"]["values"])

    # -- reproducibility --------------------------------------------------
    def canonical_json(self):
        return json.dumps(_jsonable(self.tree), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x
