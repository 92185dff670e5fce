"""Experiment configuration: defaults, YAML loading and validation.

A config file is a YAML mapping. Top-level keys::

    n_states: 10            # |S|
    n_actions: 2            # |A|
    gamma: 0.95
    horizon: 20             # trajectory length H
    N_grid: [10, 50, 200, 1000]
    runs: 200               # runs per (algorithm, N)
    base_seed: 0            # run k uses seed base_seed + k
    jobs: 1                 # worker processes
    record_wall_time: false # false writes 0 so CSVs are byte-reproducible
    expert_fraction: 2/3    # share of IRL trajectories drawn from the expert
    expert_weight: 0.52     # weight of the optimal policy in the expert mix
    algorithms: [LP-IRL-1, LP-IRL-2, LP-IRL-D, LP-IRL-C, LP-HF, MLE-HF]
    params:                 # per-algorithm overrides of ALGORITHM_DEFAULTS
      LP-IRL-C: {scale: 0.1}

Slack values (``eps_g``, ``eps_r``, ``eps_x``) may be written as ``"<coef>/sqrt(N)"`` to scale with the
sample size.
"""
from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

IRL_ALGORITHMS = ("LP-IRL-1", "LP-IRL-2", "LP-IRL-D", "LP-IRL-C")
HF_ALGORITHMS = ("LP-HF", "MLE-HF")
ALGORITHMS = IRL_ALGORITHMS + HF_ALGORITHMS

_IRL_COMMON = {"B": 100.0, "delta": 0.1, "x_mode": "sign_vectors", "eps_x": None}

ALGORITHM_DEFAULTS = {
    "LP-IRL-1": {**_IRL_COMMON, "eps_g": "0.01/sqrt(N)"},
    "LP-IRL-2": {**_IRL_COMMON, "eps_g": "0.001/sqrt(N)"},
    "LP-IRL-D": {**_IRL_COMMON, "eps_g": "0.01/sqrt(N)", "eps_r": "0.01/sqrt(N)", "evaluator": "btl"},
    "LP-IRL-C": {**_IRL_COMMON, "eps_g": "0.1/sqrt(N)", "eps_r": "0.01/sqrt(N)",
                 "evaluator": "continuous", "feedback_range": 0.2, "scale": 0.1},
    "LP-HF": {"eps_r": -0.01, "evaluator": "greedy", "objective": "dummy"},
    "MLE-HF": {"lam": 0.1, "B": 1.0, "param_space": "box", "step_size": 0.01,
               "max_iters": 100_000, "c_pess": 1.0, "evaluator": "greedy"},
}

_EVALUATORS = {"btl", "greedy", "continuous"}
_SLACK_KEYS = {"eps_g", "eps_r", "eps_x"}
_SQRT_N = re.compile(r"^\s*([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)\s*/\s*sqrt\(\s*N\s*\)\s*$")


class ConfigError(ValueError):
    pass


def resolve_value(value, N: int):
    """Numbers pass through; ``"c/sqrt(N)"`` becomes ``c / sqrt(N)``."""
    if isinstance(value, str):
        m = _SQRT_N.match(value)
        if not m:
            raise ConfigError(f"cannot parse parameter value {value!r}")
        return float(m.group(1)) / math.sqrt(N)
    return value


def _fraction(value, key):
    try:
        return float(Fraction(str(value)))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{key} must be a number, got {value!r}") from exc


@dataclass
class ExperimentConfig:
    n_states: int = 10
    n_actions: int = 2
    gamma: float = 0.95
    horizon: int = 20
    N_grid: tuple = (10, 50, 200, 1000)
    runs: int = 200
    base_seed: int = 0
    jobs: int = 1
    record_wall_time: bool = False
    expert_fraction: float = 2 / 3
    expert_weight: float = 0.52
    algorithms: tuple = ALGORITHMS
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.N_grid = tuple(int(n) for n in self.N_grid)
        self.algorithms = tuple(self.algorithms)
        self.expert_fraction = _fraction(self.expert_fraction, "expert_fraction")
        self.validate()

    def validate(self) -> None:
        if self.n_states < 1 or self.n_actions < 2:
            raise ConfigError("need at least one state and two actions")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.horizon < 1 or self.runs < 1 or self.jobs < 1:
            raise ConfigError("horizon, runs and jobs must be positive")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be nonnegative")
        if not self.N_grid or any(n < 2 for n in self.N_grid):
            raise ConfigError("every sample size must be at least 2")
        if not 0 < self.expert_fraction < 1:
            raise ConfigError("expert_fraction must lie in (0, 1)")
        if not 0 <= self.expert_weight <= 1:
            raise ConfigError("expert_weight must lie in [0, 1]")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
        for name, over in self.params.items():
            if name not in ALGORITHMS:
                raise ConfigError(f"params given for unknown algorithm {name!r}")
            if not isinstance(over, dict):
                raise ConfigError(f"params for {name} must be a mapping")
            bad = set(over) - set(ALGORITHM_DEFAULTS[name])
            if bad:
                raise ConfigError(f"{name} does not take parameters {sorted(bad)}")
        for name in self.algorithms:
            self._check_params(name, self.algorithm_params(name, max(self.N_grid)))
        if any(round(self.expert_fraction * n) < 1 for n in self.N_grid):
            raise ConfigError("every sample size must leave at least one expert trajectory")

    def _check_params(self, name, p) -> None:
        if "eps_g" in p and not p["eps_g"] >= 0:
            raise ConfigError(f"{name}: eps_g must be nonnegative")
        if "delta" in p and not 0 < p["delta"] < 1:
            raise ConfigError(f"{name}: delta must lie in (0, 1)")
        if name in IRL_ALGORITHMS and not p["B"] >= 1:
            raise ConfigError(f"{name}: B must be at least 1")
        if "evaluator" in p and p["evaluator"] not in _EVALUATORS:
            raise ConfigError(f"{name}: unknown evaluator {p['evaluator']!r}")
        if name in ("LP-IRL-D", "MLE-HF", "LP-HF") and p.get("evaluator") == "continuous":
            raise ConfigError(f"{name} needs discrete feedback")
        if name == "LP-IRL-C" and p["evaluator"] != "continuous":
            raise ConfigError("LP-IRL-C needs continuous feedback")
        if "scale" in p and not p["scale"] > 0:
            raise ConfigError(f"{name}: scale must be positive")
        if name == "MLE-HF":
            if not (p["lam"] >= 0 and p["step_size"] > 0 and p["c_pess"] > 0 and p["B"] > 0):
                raise ConfigError("MLE-HF: need lam >= 0 and positive step_size, c_pess, B")
            if p["param_space"] not in ("box", "simplex_ball"):
                raise ConfigError("MLE-HF: param_space must be box or simplex_ball")
        if p.get("x_mode") not in (None, "sign_vectors", "plus_minus_identity"):
            raise ConfigError(f"{name}: unknown x_mode {p['x_mode']!r}")
        if p.get("objective") not in (None, "dummy"):
            raise ConfigError(f"{name}: unknown objective {p['objective']!r}")

    def algorithm_params(self, name: str, N: int) -> dict:
        """Parameters of ``name`` at sample size ``N`` with slacks resolved."""
        merged = copy.deepcopy(ALGORITHM_DEFAULTS[name])
        merged.update(self.params.get(name, {}))
        return {k: resolve_value(v, N) if k in _SLACK_KEYS else v for k, v in merged.items()}

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["N_grid"] = list(self.N_grid)
        out["algorithms"] = list(self.algorithms)
        return out


def config_from_dict(data) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown config keys {sorted(bad)}")
    try:
        return ExperimentConfig(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    import yaml

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(data)
