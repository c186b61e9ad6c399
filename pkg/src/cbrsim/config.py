"""Experiment configuration documents (YAML) and their expansion into runs.

A minimal document::

    trace:
      synthetic: {n_nodes: 30, n_communities: 3, days: 18, intra_rate: 10, inter_rate: 0.5}
    strategies: [df, cbr-df]
    utilities: [prophet]
    repetitions: 20
    seed: 1

Every key has a default; :meth:`ExperimentConfig.effective` returns the fully expanded
document, which reproduces the same runs when loaded again.
"""

from __future__ import annotations

import copy
import itertools
import math
import os
from dataclasses import dataclass

import yaml

from .clustering import ClusteringConfig
from .engine import ConfigError, RunConfig, TrafficModel
from .trace import DAY, ContactTrace, generate_synthetic, load_trace
from .utilities import ProphetParams

CONFIG_DIR_ENV = "CBRSIM_CONFIG_DIR"
SWEEP_AXES = ("buffer", "ttl", "strategy", "utility")
MASK64 = (1 << 64) - 1

DEFAULTS = {
    "name": "",
    "trace": {
        "file": None,
        "format": None,
        "synthetic": None,
    },
    "strategies": ["epidemic"],
    "utilities": ["prophet"],
    "buffers": [None],
    "ttls": [0.2],
    "repetitions": 1,
    "seed": 0,
    "baseline": "auto",
    "traffic": {"n_packets": 5000, "warmup_frac": 0.2, "cooldown_frac": 0.2},
    "prophet": {"p_init": 0.75, "beta": 0.25, "gamma": 0.98, "quantum": 1.0},
    "clustering": {
        "n_tr": 50,
        "k_max": 4,
        "update": "lvq",
        "alpha": 0.05,
        "period": 50,
        "window": 50,
        "decay": 400.0,
    },
    "u_th": 0.0,
    "delivery_policy": "oracle-delete",
    "spray": {"copies": 8, "split": "proportional"},
    "hop_limit": None,
    "simbet_weight": 0.5,
    "output": {"path": None, "format": "csv"},
}

SYNTHETIC_DEFAULTS = {
    "n_nodes": 30,
    "n_communities": 3,
    "days": 18,
    "intra_rate": 10.0,
    "inter_rate": 0.5,
    "mean_contact_len": 300.0,
    "seed": 1,
}


def splitmix64(x: int) -> int:
    """One output of the splitmix64 generator seeded at state ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def repetition_seeds(master: int, n: int) -> list[int]:
    """Independent per-repetition seeds derived from one master seed."""
    state = master & MASK64
    out = []
    for _ in range(n):
        out.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & MASK64
    return out


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _as_list(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def parse_buffer(x) -> int | None:
    if x is None or (isinstance(x, str) and x.strip().lower() in ("inf", "infinite", "none")):
        return None
    if isinstance(x, float) and math.isinf(x):
        return None
    try:
        value = int(x)
    except (TypeError, ValueError):
        raise ConfigError(f"bad buffer capacity {x!r}") from None
    if value < 0:
        raise ConfigError("buffer capacity must be >= 0")
    return value


def parse_n_tr(x):
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinite"):
        return math.inf
    return x


@dataclass
class ExperimentConfig:
    doc: dict
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc: dict | None, base_dir: str = ".") -> ExperimentConfig:
        merged = _merge(DEFAULTS, doc or {})
        if merged["trace"]["synthetic"] is not None:
            merged["trace"]["synthetic"] = _merge(SYNTHETIC_DEFAULTS, merged["trace"]["synthetic"], "trace.synthetic.")
        for key in ("strategies", "utilities", "buffers", "ttls"):
            merged[key] = _as_list(merged[key])
        cfg = cls(merged, base_dir)
        cfg.validate()
        return cfg

    @property
    def trace_label(self) -> str:
        t = self.doc["trace"]
        if t["file"]:
            return os.path.basename(t["file"])
        s = t["synthetic"]
        return f"synthetic-n{s['n_nodes']}-c{s['n_communities']}-s{s['seed']}"

    def trace_path(self) -> str | None:
        f = self.doc["trace"]["file"]
        if f is None:
            return None
        return f if os.path.isabs(f) else os.path.join(self.base_dir, f)

    def validate(self) -> None:
        d = self.doc
        t = d["trace"]
        if (t["file"] is None) == (t["synthetic"] is None):
            raise ConfigError("trace needs exactly one of 'file' or 'synthetic'")
        if t["file"] is not None and not os.path.exists(self.trace_path()):
            raise ConfigError(f"trace file not found: {self.trace_path()}")
        if not isinstance(d["repetitions"], int) or d["repetitions"] < 1:
            raise ConfigError("repetitions must be a positive integer")
        for key in ("strategies", "utilities", "buffers", "ttls"):
            if not d[key]:
                raise ConfigError(f"{key} must not be empty")
        for ttl in d["ttls"]:
            if not (isinstance(ttl, (int, float)) and 0 < ttl):
                raise ConfigError(f"ttl fraction must be positive, got {ttl!r}")
        if d["output"]["format"] not in ("csv", "table"):
            raise ConfigError("output.format must be csv or table")
        # build every run config once so conflicts surface at load time
        for _ in self.run_points():
            pass

    def load_trace(self) -> ContactTrace:
        t = self.doc["trace"]
        if t["file"] is not None:
            return load_trace(self.trace_path(), t["format"])
        s = t["synthetic"]
        return generate_synthetic(
            s["n_nodes"],
            s["n_communities"],
            int(s["days"] * DAY),
            s["intra_rate"],
            s["inter_rate"],
            s["mean_contact_len"],
            s["seed"],
        )

    def run_config(self, strategy: str, utility: str, buffer) -> RunConfig:
        d = self.doc
        try:
            clustering = dict(d["clustering"])
            clustering["n_tr"] = parse_n_tr(clustering["n_tr"])
            return RunConfig(
                strategy=strategy,
                utility=utility,
                prophet=ProphetParams(**d["prophet"]),
                clustering=ClusteringConfig(**clustering),
                u_th=float(d["u_th"]),
                buffer_capacity=parse_buffer(buffer),
                delivery_policy=d["delivery_policy"],
                spray_copies=d["spray"]["copies"],
                spray_split=d["spray"]["split"],
                hop_limit=d["hop_limit"],
                simbet_weight=d["simbet_weight"],
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def traffic(self, ttl_frac: float, seed: int) -> TrafficModel:
        tr = self.doc["traffic"]
        return TrafficModel(
            n_packets=tr["n_packets"],
            seed=seed,
            warmup_frac=tr["warmup_frac"],
            cooldown_frac=tr["cooldown_frac"],
            ttl_frac=ttl_frac,
        )

    def run_points(self):
        """Yield ``(strategy, utility, buffer, ttl_frac, RunConfig)`` in a stable order."""
        d = self.doc
        for utility, strategy, buffer, ttl in itertools.product(d["utilities"], d["strategies"], d["buffers"], d["ttls"]):
            yield strategy, utility, parse_buffer(buffer), ttl, self.run_config(strategy, utility, buffer)

    def seeds(self) -> list[int]:
        return repetition_seeds(int(self.doc["seed"]), self.doc["repetitions"])

    def with_overrides(self, **changes) -> ExperimentConfig:
        doc = copy.deepcopy(self.doc)
        for key, value in changes.items():
            node = doc
            parts = key.split(".")
            for part in parts[:-1]:
                node = node[part]
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(doc, self.base_dir)

    def effective(self) -> dict:
        doc = copy.deepcopy(self.doc)
        if doc["trace"]["file"] is not None:
            doc["trace"]["file"] = os.path.abspath(self.trace_path())
        return doc

    def dump(self) -> str:
        return yaml.safe_dump(self.effective(), sort_keys=False)


def resolve_path(path: str) -> str:
    """Look up relative config paths in the working directory, then in $CBRSIM_CONFIG_DIR."""
    if os.path.isabs(path) or os.path.exists(path):
        return path
    root = os.environ.get(CONFIG_DIR_ENV)
    if root:
        candidate = os.path.join(root, path)
        if os.path.exists(candidate):
            return candidate
    return path


def load_config(path: str) -> ExperimentConfig:
    path = resolve_path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad YAML in {path}: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return ExperimentConfig.from_dict(doc, os.path.dirname(os.path.abspath(path)))
