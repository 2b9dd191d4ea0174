"""Run configuration: a strict JSON schema over the solver and pipeline knobs.

Unknown keys are rejected at every level so typos fail loudly. Defaults are
the dataclass defaults below (also listed in the README).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .slam import SlamConfig
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


@dataclass
class FusionSettings:
    method: str = "code"  # code | mult | avg | code-noprior
    views: int = 2
    pairing: str = "reference"  # reference | all
    max_iterations: int = 40

    def __post_init__(self):
        if self.method not in ("code", "mult", "avg", "code-noprior"):
            raise ConfigError(f"unknown fusion method {self.method!r}")
        if self.pairing not in ("reference", "all"):
            raise ConfigError(f"unknown pairing {self.pairing!r}")


@dataclass
class RunConfig:
    solver: SolverConfig = field(default_factory=SolverConfig.noise_normalized)
    slam: SlamConfig = field(default_factory=SlamConfig)
    fusion: FusionSettings = field(default_factory=FusionSettings)
    seed: int = 0

    def __post_init__(self):
        # the slam section's solver is the top-level solver
        self.slam.solver = self.solver


def _apply(instance, data: dict, path: str):
    known = {f.name for f in fields(instance)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)} under {path!r}")
    for key, value in data.items():
        current = getattr(instance, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.{key} must be an object")
            _apply(current, value, f"{path}.{key}")
        else:
            setattr(instance, key, value)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data, str(path))


def config_from_dict(data: dict, origin: str = "<dict>") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{origin}: config root must be an object")
    cfg = RunConfig()
    top = dict(data)
    solver_part = top.pop("solver", None)
    slam_part = top.pop("slam", None)
    fusion_part = top.pop("fusion", None)
    seed = top.pop("seed", None)
    if top:
        raise ConfigError(f"unknown config key(s) {sorted(top)} at top level")
    if solver_part is not None:
        _apply(cfg.solver, solver_part, "solver")
    if slam_part is not None:
        if "solver" in slam_part:
            raise ConfigError("set solver options at the top level, not under 'slam'")
        _apply(cfg.slam, slam_part, "slam")
    if fusion_part is not None:
        _apply(cfg.fusion, fusion_part, "fusion")
        cfg.fusion.__post_init__()
    if seed is not None:
        cfg.seed = int(seed)
    cfg.slam.solver = cfg.solver
    return cfg


def default_config_json() -> str:
    cfg = RunConfig()
    data = {
        "seed": cfg.seed,
        "solver": asdict(cfg.solver),
        "slam": {k: v for k, v in asdict(cfg.slam).items() if k != "solver"},
        "fusion": asdict(cfg.fusion),
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
