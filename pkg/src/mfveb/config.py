"""Experiment configuration: TOML with a strict, versioned schema.

Unknown keys are hard errors (a silently ignored typo in a hyperparameter
is the most expensive failure mode an experiment runner has), as are
missing required keys and type mismatches.  ``resolve`` applies defaults
and materializes typed config objects for the library layers.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bayes import PsgldConfig
from .datagen import SUITE_IDS, OracleConfig
from .multifidelity import MfVariant, ModelSpec
from .training import TrainConfig

__all__ = ["ConfigError", "Experiment", "load_config", "config_hash"]

SCHEMA_VERSION = 1

PAIRINGS = ("rnn", "veb", "rnn+rnn", "veb+rnn", "rnn+veb", "veb+veb")

# key -> (type, default); required keys use the sentinel _REQUIRED
_REQUIRED = object()

_SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "suite": (str, _REQUIRED),
        "pairing": (str, _REQUIRED),
        "variant": (str, "residual_hidden"),
        "seeds": (list, _REQUIRED),
        "out_dir": (str, "runs/out"),
        "alpha_conf": (float, 0.05),
    },
    "data": {
        "n_hf": (int, 200),
        "n_lf": (int, 400),
        "n_test": (int, 50),
        "n_replicates": (int, 20),
        "t_steps": (int, 100),
        "n_control": (int, 6),
        "cost_hf": (float, 1 / 20),
        "cost_lf": (float, 1 / 120),
        "strain_lo": (float, -0.1),
        "strain_hi": (float, 0.1),
        "ood_extrapolation": (float, 0.25),
        "elastic_modulus": (float, 20.0),
        "yield_stress": (float, 0.5),
        "hardening_modulus": (float, 0.5),
        "hardening_exponent": (float, 0.4),
        "lf_modulus_factor": (float, 0.9),
        "lf_hardening_factor": (float, 1.1),
        "noise_floor": (float, 0.05),
        "noise_slope": (float, 0.15),
        "data_dir": (str, ""),
    },
    "model": {
        "hidden": (int, 128),
        "layers": (int, 2),
        "var_hidden": (int, 8),
        "var_layers": (int, 1),
        "lf_hidden": (int, 0),   # 0: inherit hidden
        "lf_layers": (int, 0),   # 0: inherit layers
    },
    "train_mean": {
        "epochs": (int, 1000),
        "lr": (float, 1e-3),
        "batch_size": (int, 0),
        "val_fraction": (float, 0.2),
        "chunk": (int, 256),
    },
    "train_variance": {
        "epochs": (int, 4000),
        "lr": (float, 1e-2),
    },
    "bayes": {
        "step_size": (float, 1e-3),
        "burn_in": (int, 50),
        "n_samples": (int, 100),
        "sample_stride": (int, 10),
        "minibatch": (int, 0),
        "preconditioner": (str, "rmsprop"),
        "decay_gamma": (float, 0.0),
        "k_iterations": (int, 2),
    },
    "sweep": {
        "total_cost": (float, 0.0),
        "lf_fractions": (list, [0.0, 0.25, 0.5, 0.75, 1.0]),
    },
}

_TOML_SECTION_NAMES = {"train_mean": ("train", "mean"),
                       "train_variance": ("train", "variance")}


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


def _coerce(value, expected, where):
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, expected) or isinstance(value, bool) and expected is not bool:
        raise ConfigError(f"{where}: expected {expected.__name__}, got {type(value).__name__}")
    return value


def _walk_section(raw: dict, section: str, schema: dict, prefix: str) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key: {prefix}{key}")
        out[key] = _coerce(value, schema[key][0], f"{prefix}{key}")
    for key, (_, default) in schema.items():
        if key not in out:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key: {prefix}{key}")
            out[key] = default
    return out


def parse_config(raw: dict) -> dict:
    """Validate a parsed TOML dict against the schema; returns plain dicts."""
    raw = dict(raw)
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    sections: dict[str, dict] = {}
    train = raw.pop("train", None)
    if train is not None:
        if not isinstance(train, dict):
            raise ConfigError("train: expected a table")
        for sub, content in train.items():
            name = f"train_{sub}"
            if name not in _SCHEMA:
                raise ConfigError(f"unknown key: train.{sub}")
            sections[name] = _walk_section(content, name, _SCHEMA[name], f"train.{sub}.")
    for key, content in raw.items():
        if key not in _SCHEMA or key.startswith("train_"):
            raise ConfigError(f"unknown key: {key}")
        if not isinstance(content, dict):
            raise ConfigError(f"{key}: expected a table")
        sections[key] = _walk_section(content, key, _SCHEMA[key], f"{key}.")
    for name, schema in _SCHEMA.items():
        if name not in sections:
            sections[name] = _walk_section({}, name, schema, f"{name}.")
    _validate_semantics(sections)
    return sections


def _validate_semantics(cfg: dict) -> None:
    exp = cfg["experiment"]
    if exp["suite"] not in SUITE_IDS:
        raise ConfigError(f"experiment.suite: unknown suite {exp['suite']!r}")
    if exp["pairing"] not in PAIRINGS:
        raise ConfigError(f"experiment.pairing: unknown pairing {exp['pairing']!r}")
    try:
        MfVariant(exp["variant"])
    except ValueError:
        raise ConfigError(f"experiment.variant: unknown variant {exp['variant']!r}") from None
    if not exp["seeds"] or not all(isinstance(s, int) for s in exp["seeds"]):
        raise ConfigError("experiment.seeds: need a nonempty list of integers")
    if "+" in exp["pairing"] and cfg["data"]["n_lf"] <= 0:
        raise ConfigError("data.n_lf: multi-fidelity pairing needs low-fidelity paths")
    if exp["suite"] == "s1" and "+" in exp["pairing"]:
        raise ConfigError("experiment.pairing: suite s1 has no low-fidelity data")
    for frac in cfg["sweep"]["lf_fractions"]:
        if not isinstance(frac, (int, float)) or not 0.0 <= float(frac) <= 1.0:
            raise ConfigError("sweep.lf_fractions: fractions must lie in [0, 1]")


def load_config(path) -> dict:
    with Path(path).open("rb") as fh:
        raw = tomllib.load(fh)
    return parse_config(raw)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Experiment:
    """Typed view of a validated configuration."""

    cfg: dict

    @property
    def suite(self) -> str:
        return self.cfg["experiment"]["suite"]

    @property
    def pairing(self) -> str:
        return self.cfg["experiment"]["pairing"]

    @property
    def variant(self) -> MfVariant:
        return MfVariant(self.cfg["experiment"]["variant"])

    @property
    def seeds(self) -> list:
        return list(self.cfg["experiment"]["seeds"])

    @property
    def alpha_conf(self) -> float:
        return self.cfg["experiment"]["alpha_conf"]

    @property
    def is_multifidelity(self) -> bool:
        return "+" in self.pairing

    def oracle_config(self) -> OracleConfig:
        d = self.cfg["data"]
        return OracleConfig(
            elastic_modulus=d["elastic_modulus"], yield_stress=d["yield_stress"],
            hardening_modulus=d["hardening_modulus"],
            hardening_exponent=d["hardening_exponent"],
            lf_modulus_factor=d["lf_modulus_factor"],
            lf_hardening_factor=d["lf_hardening_factor"],
            noise_floor=d["noise_floor"], noise_slope=d["noise_slope"])

    def benchmark_kwargs(self) -> dict:
        d = self.cfg["data"]
        return dict(n_hf=d["n_hf"], n_lf=d["n_lf"], n_test=d["n_test"],
                    n_replicates=d["n_replicates"], t_steps=d["t_steps"],
                    n_control=d["n_control"],
                    strain_range=(d["strain_lo"], d["strain_hi"]),
                    ood_extrapolation=d["ood_extrapolation"],
                    cfg=self.oracle_config())

    def _spec(self, kind: str, hidden: int, layers: int) -> ModelSpec:
        m = self.cfg["model"]
        tm = self.cfg["train_mean"]
        tv = self.cfg["train_variance"]
        b = self.cfg["bayes"]
        return ModelSpec(
            kind=kind, hidden=hidden, layers=layers,
            var_hidden=m["var_hidden"], var_layers=m["var_layers"],
            mean_cfg=TrainConfig(epochs=tm["epochs"], lr=tm["lr"],
                                 batch_size=tm["batch_size"],
                                 val_fraction=tm["val_fraction"], chunk=tm["chunk"]),
            var_cfg=TrainConfig(epochs=tv["epochs"], lr=tv["lr"], chunk=tm["chunk"]),
            psgld_cfg=PsgldConfig(step_size=b["step_size"], burn_in=b["burn_in"],
                                  n_samples=b["n_samples"],
                                  sample_stride=b["sample_stride"],
                                  minibatch=b["minibatch"],
                                  preconditioner=b["preconditioner"],
                                  decay_gamma=b["decay_gamma"]),
            k_iterations=b["k_iterations"])

    def hf_spec(self) -> ModelSpec:
        kind = self.pairing.split("+")[-1]
        m = self.cfg["model"]
        return self._spec(kind, m["hidden"], m["layers"])

    def lf_spec(self) -> ModelSpec:
        if not self.is_multifidelity:
            raise ConfigError("single-fidelity experiment has no low-fidelity model")
        kind = self.pairing.split("+")[0]
        m = self.cfg["model"]
        hidden = m["lf_hidden"] or m["hidden"]
        layers = m["lf_layers"] or m["layers"]
        return self._spec(kind, hidden, layers)

    def budget_row_label(self) -> str:
        if self.is_multifidelity:
            return f"{self.pairing}/{self.variant.value}"
        return self.pairing
