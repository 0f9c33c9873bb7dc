"""Run configuration: one JSON document with a section per stage.

::

    {
      "seed": 7,
      "clock": "virtual",
      "sim": {...},          # SimConfig fields except seed
      "collector": {...},    # CollectorParams fields; startpoint optional
      "platform": {"rate_limit": 75, "monthly_cap": 10000000, "search_limit": null},
      "analysis": {"c": 0.95, "min_bin_size": 50, "dense_cap": 2000, "q": 2},
      "eval": {"population": "final_harvest", "jaccard_threshold": 0.5}
    }

``collector.startpoint`` is absolute epoch seconds; when omitted it defaults
to the world epoch plus ``collector.start_offset`` (default 0).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .collector import CollectorParams, parse_duration
from .errors import ConfigError
from .platform import DEFAULT_MONTHLY_CAP, DEFAULT_RATE_LIMIT
from .world import SimConfig

SECTIONS = ("seed", "clock", "sim", "collector", "platform", "analysis", "eval")


@dataclass(frozen=True)
class PlatformOptions:
    rate_limit: int = DEFAULT_RATE_LIMIT
    monthly_cap: int = DEFAULT_MONTHLY_CAP
    search_limit: int | None = None


@dataclass(frozen=True)
class AnalysisOptions:
    c: float = 0.95
    min_bin_size: int = 50
    dense_cap: int = 2000
    q: int = 2


@dataclass(frozen=True)
class EvalOptions:
    population: str = "final_harvest"
    jaccard_threshold: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    seed: int
    sim: SimConfig
    collector: CollectorParams | None
    clock: str = "virtual"
    platform: PlatformOptions = field(default_factory=PlatformOptions)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)

    def to_dict(self, redact: bool = False) -> dict[str, Any]:
        sim = self.sim.to_dict()
        sim.pop("seed")
        return {
            "seed": self.seed,
            "clock": self.clock,
            "sim": sim,
            "collector": None if self.collector is None else self.collector.to_dict(redact),
            "platform": dataclasses.asdict(self.platform),
            "analysis": dataclasses.asdict(self.analysis),
            "eval": dataclasses.asdict(self.eval),
        }


def _options(cls, data: Mapping[str, Any] | None, where: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be an object", [where])
    known = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"unknown {where} keys: " + ", ".join(extra), [f"{where}.{k}" for k in extra])
    return cls(**data)


def collector_params(data: Mapping[str, Any], default_start: int) -> CollectorParams:
    d = dict(data)
    offset = parse_duration(d.pop("start_offset", 0))
    if "startpoint" not in d:
        d["startpoint"] = default_start + offset
    try:
        params = CollectorParams.from_dict(d)
        params.validate()
        return params
    except ConfigError as exc:
        raise ConfigError(str(exc), [f"collector.{k}" for k in exc.keys]) from exc


def parse_config(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object", ["<root>"])
    extra = sorted(set(data) - set(SECTIONS))
    if extra:
        raise ConfigError("unknown config keys: " + ", ".join(extra), extra)
    clock = data.get("clock", "virtual")
    if clock not in ("virtual", "wall"):
        raise ConfigError(f"clock must be 'virtual' or 'wall', got {clock!r}", ["clock"])
    sim_data = dict(data.get("sim") or {})
    seed = data.get("seed", sim_data.get("seed"))
    if seed is None and clock == "virtual":
        raise ConfigError("a seed is required in virtual mode", ["seed"])
    if "seed" in sim_data and sim_data["seed"] != seed:
        raise ConfigError("sim.seed disagrees with the global seed", ["sim.seed"])
    sim_data["seed"] = int(seed or 0)
    try:
        sim = SimConfig.from_dict(sim_data)
        sim.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), [k if k.startswith("sim") else f"sim.{k}" for k in exc.keys]) from exc
    except TypeError as exc:
        raise ConfigError(f"sim: {exc}", ["sim"]) from exc
    coll = data.get("collector")
    params = collector_params(coll, sim.epoch) if coll is not None else None
    return RunConfig(
        seed=int(seed or 0),
        sim=sim,
        collector=params,
        clock=clock,
        platform=_options(PlatformOptions, data.get("platform"), "platform"),
        analysis=_options(AnalysisOptions, data.get("analysis"), "analysis"),
        eval=_options(EvalOptions, data.get("eval"), "eval"),
    )


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("likeharvest.presets").iterdir() if p.name.endswith(".json"))


def read_config_source(source: str | Path) -> dict[str, Any]:
    """Read a config file, or a bundled preset by name (``calm`` or ``preset:calm``)."""
    text = str(source)
    name = text[7:] if text.startswith("preset:") else None
    path = Path(text)
    if name is None and not path.exists() and text in preset_names():
        name = text
    try:
        if name is not None:
            if name not in preset_names():
                raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}", ["preset"])
            raw = resources.files("likeharvest.presets").joinpath(f"{name}.json").read_text()
        else:
            raw = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {text}: {exc}", ["config"]) from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})", ["config"]) from exc


def load_config(source: str | Path, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    data = read_config_source(source)
    for key, value in (overrides or {}).items():
        data[key] = value
    return parse_config(data)
