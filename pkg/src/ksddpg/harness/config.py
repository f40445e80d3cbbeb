"""Experiment configuration files (``"config": "ksddpg-exp-1"``)."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from ..agents.common import Hyper
from ..errors import ConfigError, SchemaError, json_path
from ..signals import ControllerConfig
from ..sim.demand import DemandSpec, Flow, grid_demand, load_demand
from ..sim.network import RoadNetwork, build_grid, data_path, load_network

CONFIG_TAG = "ksddpg-exp-1"
ALGORITHMS = ("ksddpg", "maddpg", "ddpg", "dqn", "fixed_time", "max_pressure")
LEARNING = ("ksddpg", "maddpg", "ddpg", "dqn")

_SCHEMA = {
    "type": "object",
    "required": ["config", "network", "demand", "algorithm"],
    "properties": {
        "config": {"const": CONFIG_TAG},
        "network": {"type": "object"},
        "demand": {"type": "object"},
        "algorithm": {"enum": list(ALGORITHMS)},
        "episodes": {"type": "integer", "minimum": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "eval_episodes": {"type": "integer", "minimum": 1},
        "hyper": {"type": "object"},
        "controller": {"type": "object"},
        "volume": {"enum": ["total", "queued"]},
        "backend": {"enum": ["auto", "cython", "python"]},
        "output_dir": {"type": "string"},
        "checkpoint": {"type": ["string", "null"]},
        "period_threshold": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    network: dict
    demand: dict
    algorithm: str
    episodes: int = 1200
    horizon: int = 720
    seeds: list = field(default_factory=lambda: [0])
    eval_episodes: int = 1
    hyper: Hyper = field(default_factory=Hyper)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    volume: str = "total"
    backend: str = "auto"
    output_dir: str = "runs"
    checkpoint: str | None = None
    period_threshold: float = 0.5
    base_dir: Path = field(default_factory=Path.cwd)

    # -- resolution ---------------------------------------------------------------

    def _path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def build_network(self) -> RoadNetwork:
        spec = self.network
        if "grid" in spec:
            g = spec["grid"]
            return build_grid(int(g.get("rows", 2)), int(g.get("cols", 2)), float(g.get("link_length", 800.0)))
        if "builtin" in spec:
            return load_network(data_path(f"{spec['builtin']}.json"))
        if "file" in spec:
            return load_network(self._path(spec["file"]))
        raise ConfigError("network needs one of 'grid', 'builtin' or 'file'")

    def build_demand(self, net: RoadNetwork) -> DemandSpec:
        spec = self.demand
        if "grid" in spec:
            g = spec["grid"]
            return grid_demand(net, float(g["rate_ns"]), float(g.get("rate_ew", g["rate_ns"])))
        if "builtin" in spec:
            return load_demand(data_path(f"{spec['builtin']}_demand.json"))
        if "file" in spec:
            return load_demand(self._path(spec["file"]))
        if "flows" in spec:
            return DemandSpec([Flow(f["origin"], f["destination"], float(f["rate"]),
                                    float(f.get("start", 0.0)),
                                    float("inf") if f.get("end") is None else float(f["end"]))
                               for f in spec["flows"]])
        raise ConfigError("demand needs one of 'grid', 'builtin', 'file' or 'flows'")

    def validate(self) -> "ExperimentConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.episodes < 1 or self.horizon < 1:
            raise ConfigError("episodes and horizon must be >= 1")
        for spec in (self.network, self.demand):
            if "file" in spec and not self._path(spec["file"]).exists():
                raise ConfigError(f"referenced file not found: {spec['file']}")
        if self.checkpoint and not self._path(self.checkpoint).exists():
            raise ConfigError(f"checkpoint not found: {self.checkpoint}")
        return self

    def to_dict(self) -> dict:
        return {
            "config": CONFIG_TAG, "network": self.network, "demand": self.demand,
            "algorithm": self.algorithm, "episodes": self.episodes, "horizon": self.horizon,
            "seeds": list(self.seeds), "eval_episodes": self.eval_episodes,
            "hyper": {k: (list(v) if isinstance(v, tuple) else v)
                      for k, v in dataclasses.asdict(self.hyper).items()},
            "controller": dataclasses.asdict(self.controller), "volume": self.volume,
            "backend": self.backend, "output_dir": self.output_dir, "checkpoint": self.checkpoint,
            "period_threshold": self.period_threshold,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def _set_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not a section")
    cur[keys[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """``key.path=value``; the value is parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def config_from_dict(doc: dict, base_dir: Path | None = None, overrides=()) -> ExperimentConfig:
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _set_path(doc, key, value)
    try:
        jsonschema.validate(doc, _SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.message, json_path(exc.absolute_path)) from None
    try:
        hyper = Hyper(**doc.get("hyper", {}))
        controller = ControllerConfig(**doc.get("controller", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    kw = {k: v for k, v in doc.items() if k not in ("config", "hyper", "controller")}
    cfg = ExperimentConfig(hyper=hyper, controller=controller,
                           base_dir=base_dir or Path.cwd(), **kw)
    return cfg.validate()


def load_config(path, overrides=()) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno})", str(path)) from None
    return config_from_dict(doc, path.parent, overrides)
