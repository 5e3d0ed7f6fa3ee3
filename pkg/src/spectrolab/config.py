"""Experiment configuration: YAML in, validated dataclass out.

Config files are YAML mappings::

    experiment: specineq
    seed: 0
    domain: {dim: 1, L: 3.14159, N: 256}
    coefficients: {kind: constant}
    set: {kind: interval}
    params: {mus: [4, 6, 8, 10]}

Validation errors carry the dotted path of the offending field.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import yaml

EXPERIMENTS = (
    "spectrum", "specineq", "propagation", "sobolev",
    "control-hum", "control-lr", "control-impulsive", "obster", "sets",
)

# subcommand -> experiment kinds it accepts
SUBCOMMANDS = {
    "spectrum": ("spectrum",),
    "specineq": ("specineq",),
    "propagation": ("propagation",),
    "sobolev": ("sobolev",),
    "control": ("control-hum", "control-lr", "control-impulsive"),
    "obster": ("obster",),
    "sets": ("sets",),
}

NEEDS_SET = {"specineq", "propagation", "control-hum", "control-lr", "control-impulsive", "obster", "sets"}

MIN_POINTS_PER_WAVELENGTH = 8


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    domain: dict
    coefficients: dict
    set: dict | None
    params: dict
    output: str | None = None
    resolution: str = "warn"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def spacing(self) -> float:
        return self.domain["L"] / self.domain["N"]


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    return data


def dump_yaml(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True)


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def _number(block: dict, key: str, path: str, kind=float, positive: bool = True):
    if key not in block:
        raise ConfigError(f"{path}.{key}", "missing")
    try:
        value = kind(block[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}, got {block[key]!r}") from exc
    if positive and not value > 0:
        raise ConfigError(f"{path}.{key}", f"must be positive, got {value}")
    return value


def max_frequency(experiment: str, params: dict) -> float | None:
    """Largest frequency the experiment resolves, for the resolution rule."""
    if "mus" in params:
        return float(max(params["mus"]))
    if "mu_range" in params:
        return float(max(params["mu_range"]))
    if experiment == "control-lr":
        return float(params.get("mu0", 2.0)) * float(params.get("growth", 2.0)) ** (int(params.get("slabs", 2)) - 1)
    if params.get("mu") is not None:
        return float(params["mu"])
    return None


def check_resolution(cfg: ExperimentConfig) -> float | None:
    """Points per wavelength ``2 pi / (mu_max h)``; warns or fails below the minimum."""
    mu = max_frequency(cfg.experiment, cfg.params)
    if mu is None or mu <= 0:
        return None
    ppw = 2 * math.pi / (mu * cfg.spacing)
    if ppw < MIN_POINTS_PER_WAVELENGTH:
        msg = f"{ppw:.2f} points per wavelength at mu = {mu} (need {MIN_POINTS_PER_WAVELENGTH})"
        if cfg.resolution == "fail":
            raise ConfigError("domain.N", "under-resolved: " + msg)
        warnings.warn(msg, ResolutionWarning, stacklevel=2)
    return ppw


def validate(data: dict, subcommand: str | None = None, seed: int | None = None,
             strict: bool = False) -> ExperimentConfig:
    data = dict(data)
    experiment = data.get("experiment")
    if experiment is None and subcommand is not None:
        experiment = SUBCOMMANDS[subcommand][0]
    if experiment is None:
        raise ConfigError("experiment", "missing")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    if subcommand is not None and experiment not in SUBCOMMANDS[subcommand]:
        raise ConfigError("experiment", f"{experiment!r} cannot run under subcommand {subcommand!r}")

    if seed is None:
        if "seed" not in data:
            raise ConfigError("seed", "missing (seeds must be explicit)")
        seed = data["seed"]
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed", f"expected int, got {seed!r}") from exc

    domain = data.get("domain")
    if not isinstance(domain, dict):
        raise ConfigError("domain", "missing block")
    dim = _number(domain, "dim", "domain", int)
    if dim not in (1, 2):
        raise ConfigError("domain.dim", f"must be 1 or 2, got {dim}")
    domain = {"dim": dim, "L": _number(domain, "L", "domain"), "N": _number(domain, "N", "domain", int)}

    coeffs = data.get("coefficients", {"kind": "constant"})
    if not isinstance(coeffs, dict):
        raise ConfigError("coefficients", "must be a mapping")

    set_block = data.get("set")
    if experiment in NEEDS_SET:
        if not isinstance(set_block, dict):
            raise ConfigError("set", f"missing block (required by {experiment})")
        if "kind" not in set_block:
            raise ConfigError("set.kind", "missing")

    params = data.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("params", "must be a mapping")
    _validate_params(experiment, params)

    policy = "fail" if strict else str(data.get("resolution", "warn"))
    if policy not in ("warn", "fail"):
        raise ConfigError("resolution", f"must be 'warn' or 'fail', got {policy!r}")
    data["seed"] = seed
    cfg = ExperimentConfig(experiment, seed, domain, coeffs, set_block, params,
                           data.get("output"), policy, data)
    check_resolution(cfg)
    return cfg


def _validate_params(experiment: str, p: dict) -> None:
    if experiment in ("specineq", "sobolev"):
        if "mus" not in p:
            raise ConfigError("params.mus", "missing")
        mus = p["mus"]
        if not isinstance(mus, list) or len(mus) < 4:
            raise ConfigError("params.mus", "need a list of at least 4 values")
        if any(b <= a for a, b in zip(mus, mus[1:])):
            raise ConfigError("params.mus", "must be strictly increasing")
    if experiment in ("specineq",) and p.get("variant", "L2") not in ("L2", "LinfSum"):
        raise ConfigError("params.variant", f"unknown variant {p['variant']!r}")
    if experiment == "propagation":
        rng = p.get("mu_range", [5, 15])
        if not (isinstance(rng, list) and len(rng) == 2 and 0 < rng[0] < rng[1]):
            raise ConfigError("params.mu_range", "need [lo, hi] with 0 < lo < hi")
    if experiment in ("control-hum", "control-lr", "control-impulsive", "obster"):
        _number(p, "T", "params")
    if experiment == "control-hum":
        F = p.get("F")
        if not isinstance(F, list) or not F:
            raise ConfigError("params.F", "need a list of [a, b] intervals")
        for i, iv in enumerate(F):
            if not (isinstance(iv, list) and len(iv) == 2):
                raise ConfigError(f"params.F[{i}]", "need [a, b]")
    if experiment in ("control-impulsive", "obster"):
        tau = _number(p, "tau", "params")
        if not tau < 1:
            raise ConfigError("params.tau", "must lie in (0, 1)")
