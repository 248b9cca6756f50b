"""Experiment configuration: a YAML file, validated into an ExperimentConfig."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..errors import ConfigError
from ..instances import sparse_system
from ..system import CostSpec, DynamicsParameter, reference_system

OUTPUT_DIR_ENV = "ADAPTIVE_LQR_OUTPUT_DIR"
POLICY_KINDS = ("optimal", "ce", "rce", "ts", "gce")
SIDE_KINDS = ("exact_support", "support", "subspace", "full")
PRESETS = {"reference": reference_system, "sparse": sparse_system}

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replicate_seed(base: int, index: int) -> int:
    """Seed of replicate ``index``: ``base XOR splitmix64(index)``."""
    return (int(base) & MASK64) ^ splitmix64(int(index))


def stream_seeds(seed: int) -> dict[str, int]:
    """Independent sub-seeds for the noise, the policy and the initial estimate."""
    noise, policy, init = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint64)
    return {"noise": int(noise), "policy": int(policy), "init": int(init)}


@dataclass
class ExperimentConfig:
    system: dict | str = "reference"
    policy: dict = field(default_factory=lambda: {"kind": "rce", "sigma0": 0.1})
    noise: dict = field(default_factory=lambda: {"covariance": "identity", "kind": "gaussian"})
    gamma: float = 1.2
    horizon: int = 100_000
    replicates: int = 10
    seed: int = 0
    x0: list | None = None
    initial_scale: float = 0.05
    outputs: str = "results"
    points_per_decade: int = 20
    decomposition_horizons: list = field(default_factory=lambda: [100, 1000, 10000])
    workers: int = 1
    name: str = "experiment"
    base_dir: str = "."

    def validate(self) -> "ExperimentConfig":
        if not self.gamma > 1.0:
            raise ConfigError("gamma must exceed 1")
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be at least 1")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be at least 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        if not isinstance(self.policy, dict) or self.policy.get("kind") not in POLICY_KINDS:
            raise ConfigError(f"policy.kind must be one of {POLICY_KINDS}")
        kind = self.policy["kind"]
        if kind == "rce" and float(self.policy.get("sigma0", 0.1)) < 0:
            raise ConfigError("policy.sigma0 must be nonnegative")
        if kind == "ts" and float(self.policy.get("sigma0_scale", 1.0)) <= 0:
            raise ConfigError("policy.sigma0_scale must be positive")
        if kind == "gce":
            side = self.policy.get("side", {"kind": "exact_support"})
            if side.get("kind") not in SIDE_KINDS:
                raise ConfigError(f"policy.side.kind must be one of {SIDE_KINDS}")
            if side.get("kind") == "support" and "mask" not in side:
                path = side.get("file")
                if path is None:
                    raise ConfigError("support side information needs 'mask' or 'file'")
                if not self.resolve(path).is_file():
                    raise ConfigError(f"side information file {path} does not exist")
        self.dynamics()
        self.noise_covariance()
        return self

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def dynamics(self) -> tuple[DynamicsParameter, CostSpec]:
        if isinstance(self.system, str):
            if self.system not in PRESETS:
                raise ConfigError(f"unknown system preset {self.system!r}")
            return PRESETS[self.system]()
        try:
            theta = DynamicsParameter(self.system["a"], self.system["b"])
            p, r = theta.p, theta.r
            cost = CostSpec(self.system.get("q", np.eye(p)), self.system.get("r", np.eye(r)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad system block: {exc}") from exc
        return theta, cost

    def noise_covariance(self) -> np.ndarray:
        p = self.dynamics()[0].p
        cov = self.noise.get("covariance", "identity")
        c = np.eye(p) if cov == "identity" else np.asarray(cov, dtype=float)
        if c.shape != (p, p):
            raise ConfigError("noise covariance has the wrong shape")
        if self.noise.get("kind", "gaussian") not in ("gaussian", "uniform"):
            raise ConfigError("noise.kind must be gaussian or uniform")
        return c

    def output_dir(self) -> Path:
        override = os.environ.get(OUTPUT_DIR_ENV)
        return Path(override) if override else self.resolve(self.outputs)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d.pop("workers")  # results do not depend on the worker count
        d.pop("outputs")
        return d

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, default=float)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_FIELDS = set(ExperimentConfig.__dataclass_fields__) - {"base_dir"}


def config_from_dict(data: dict, base_dir=".") -> ExperimentConfig:
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**data, base_dir=str(base_dir))
    cfg.horizon = int(cfg.horizon)
    cfg.replicates = int(cfg.replicates)
    cfg.gamma = float(cfg.gamma)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file {path} not found")
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    return config_from_dict(data, base_dir=path.parent)


def preset(name: str, **overrides) -> ExperimentConfig:
    """Ready-made configurations for the reference experiments."""
    base = {
        "reference-rce": {"system": "reference", "policy": {"kind": "rce", "sigma0": 0.1}, "name": "reference-rce"},
        "reference-ts": {"system": "reference", "policy": {"kind": "ts", "sigma0_scale": 1.0}, "name": "reference-ts"},
        "sparse-gce": {"system": "sparse", "policy": {"kind": "gce", "side": {"kind": "exact_support"},
                                                      "c_lambda": 0.0}, "name": "sparse-gce"},
        "sparse-rce": {"system": "sparse", "policy": {"kind": "rce", "sigma0": 0.1}, "name": "sparse-rce"},
        "optimal": {"system": "reference", "policy": {"kind": "optimal"}, "name": "optimal"},
    }
    if name not in base:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(base)}")
    return config_from_dict({**base[name], **overrides})
