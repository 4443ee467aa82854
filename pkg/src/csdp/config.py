"""Sweep configuration files (YAML or JSON, one mapping per file)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .mechanisms import KINDS, ORACLE

EXPERIMENTS = ("sum-sweep", "bandit-sweep", "mechanism-test", "hard-input")
FAMILIES = ("all-ones", "seeded-uniform", "hard")
BINARY_K = "binary"


@dataclass
class SweepConfig:
    experiment: str
    n: list = field(default_factory=list)
    k: list = field(default_factory=lambda: [1])
    epsilon: list = field(default_factory=lambda: [1.0])
    delta: list = field(default_factory=lambda: [0.01])
    mechanism: list = field(default_factory=lambda: [ORACLE])
    trials: int = 100
    seeds: list | None = None
    seed: int = 0
    output: str = "results.csv"
    families: list = field(default_factory=lambda: ["all-ones", "seeded-uniform"])
    beta: float = 0.1
    oracle_variance: float | None = None
    oracle_constant: float = 1.0
    workers: int = 1
    trace_output: str | None = None
    # bandit cells
    d: int = 2
    n_actions: int = 4
    sigma: float = 0.1
    context: str = "random"
    sigma_prime_scale: float = 1.0
    lambda_min: float = 1.0
    alpha_conf: float | None = None

    def __post_init__(self):
        self.validate()

    @property
    def cell_seeds(self) -> list[int]:
        """Seeds used by every cell; shared across cells for common random numbers."""
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return list(range(self.seed, self.seed + self.trials))

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("n", "k", "epsilon", "delta", "mechanism"):
            grid = getattr(self, name)
            if not isinstance(grid, list) or not grid:
                raise ConfigError(f"grid {name!r} must be a nonempty list")
        if self.experiment == "sum-sweep" and not self.families:
            raise ConfigError("grid 'families' must be a nonempty list")
        for n in self.n:
            if isinstance(n, bool) or not isinstance(n, int) or n < 2:
                raise ConfigError(f"n values must be integers >= 2, got {n!r}")
        for k in self.k:
            if k != BINARY_K and (isinstance(k, bool) or not isinstance(k, int) or k < 1):
                raise ConfigError(f"k values must be positive integers or 'binary', got {k!r}")
        if any(e <= 0 for e in self.epsilon):
            raise ConfigError("epsilon values must be positive")
        if any(not 0 <= dl < 1 for dl in self.delta):
            raise ConfigError("delta values must lie in [0, 1)")
        for m in self.mechanism:
            if m not in KINDS:
                raise ConfigError(f"unknown mechanism {m!r}; choose from {KINDS}")
        for f in self.families:
            if f not in FAMILIES:
                raise ConfigError(f"unknown input family {f!r}; choose from {FAMILIES}")
        if self.seeds is None and self.trials < 1:
            raise ConfigError("trials must be >= 1")
        seeds = self.cell_seeds
        if not seeds:
            raise ConfigError("seed list must be nonempty")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be distinct within a cell")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' key")
        data = dict(data)
        # scalars are accepted as one-element grids
        for name in ("n", "k", "epsilon", "delta", "mechanism", "families"):
            if name in data and not isinstance(data[name], list):
                data[name] = [data[name]]
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(data)
