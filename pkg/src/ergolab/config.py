"""Experiment configuration: JSON loading, validation and object builders."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .driver import GOLDEN, DriverSpec
from .errors import ErgolabError, SpecError
from .spaces.maps import SemicontractionSystem, _complex, make_map
from .spaces.metrics import MetricSpace, PoincareDisk, space_from_dict
from .subadd import (
    DeltaSchedule,
    OrbitCocycle,
    SubadditiveCocycle,
    TableCocycle,
    additive_cocycle,
    birkhoff_cocycle,
    calibrate_delta,
    walk_cocycle,
)

SCHEMA_VERSION = 1
EXPERIMENTS = ("drift", "goodtimes", "functional", "banach", "meanergodic", "wolffdenjoy", "oseledets",
               "decompose")
NEEDS_MAPS = ("functional", "banach", "wolffdenjoy")
NEEDS_MATRICES = ("meanergodic", "oseledets")


class ConfigError(ErgolabError, ValueError):
    """A config file that cannot be parsed or fails validation; carries a line number."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass
class ExperimentConfig:
    experiment: str
    driver: dict
    horizon: int
    seeds: list
    space: dict | None = None
    maps: dict | None = None
    basepoint: object = None
    cocycle: dict = field(default_factory=lambda: {"kind": "orbit"})
    matrices: dict | None = None
    vector: list | None = None
    training_seeds: list | None = None
    calibration_horizon: int | None = None
    delta: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    A: float | None = None
    mode: str = "paper"
    tolerances: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: str = "out"
    schema_version: int = SCHEMA_VERSION
    raw: dict = field(default_factory=dict, repr=False)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def to_dict(self) -> dict:
        return dict(self.raw)


_FIELDS = {f for f in ExperimentConfig.__dataclass_fields__ if f != "raw"}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path, experiment: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a config file; errors carry the offending line."""
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", None, source) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, source) from exc
    return config_from_dict(raw, experiment, overrides, text=text, source=source)


def config_from_dict(raw: dict, experiment: str | None = None, overrides: dict | None = None,
                     text: str = "", source: str = "<config>") -> ExperimentConfig:
    def fail(msg, key=None):
        raise ConfigError(msg, _line_of(text, key) if key else None, source)

    if not isinstance(raw, dict):
        fail("top level must be a JSON object")
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    unknown = sorted(set(raw) - _FIELDS)
    if unknown:
        fail(f"unknown field {unknown[0]!r}", unknown[0])
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        fail(f"unsupported schema_version {raw.get('schema_version')!r}", "schema_version")
    if experiment is not None:
        if "experiment" in raw and raw["experiment"] != experiment:
            fail(f"config is for experiment {raw['experiment']!r}, not {experiment!r}", "experiment")
        raw["experiment"] = experiment
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        fail(f"experiment must be one of {', '.join(EXPERIMENTS)}", "experiment")
    for key in ("driver", "horizon", "seeds"):
        if key not in raw:
            fail(f"missing required field {key!r}")
    horizon = raw["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        fail("horizon must be an integer >= 1", "horizon")
    seeds = raw["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        fail("seeds must be a non-empty list of integers", "seeds")
    ts = raw.get("training_seeds")
    if isinstance(ts, dict):
        try:
            raw["training_seeds"] = list(range(int(ts["start"]), int(ts["start"]) + int(ts["count"])))
        except (KeyError, TypeError, ValueError):
            fail("training_seeds range needs integer 'start' and 'count'", "training_seeds")
    cfg = ExperimentConfig(**{k: v for k, v in raw.items() if k in _FIELDS}, raw=raw)
    try:
        spec = build_driver(cfg.driver)
    except (SpecError, KeyError, TypeError, ValueError) as exc:
        fail(f"driver: {exc}", "driver")
    if exp in NEEDS_MAPS or (cfg.cocycle.get("kind") == "orbit" and exp in ("drift", "goodtimes", "decompose")):
        if not cfg.space or not cfg.maps:
            fail("this experiment needs 'space' and 'maps'", "space" if not cfg.space else "maps")
        missing = [s for s in range(spec.alphabet_size) if str(s) not in cfg.maps]
        if missing:
            fail(f"no map assigned to symbol {missing[0]}", "maps")
        try:
            build_system(cfg)
        except (SpecError, KeyError, TypeError, ValueError) as exc:
            fail(f"maps: {exc}", "maps")
    if exp in NEEDS_MATRICES:
        if not cfg.matrices:
            fail("this experiment needs 'matrices'", "matrices")
        missing = [s for s in range(spec.alphabet_size) if str(s) not in cfg.matrices]
        if missing:
            fail(f"no matrix assigned to symbol {missing[0]}", "matrices")
    if exp == "meanergodic" and cfg.vector is None:
        fail("meanergodic needs 'vector'", "vector")
    if cfg.mode not in ("paper", "strict"):
        fail("mode must be 'paper' or 'strict'", "mode")
    kind = cfg.delta.get("kind")
    if kind not in ("constant", "harmonic", "log_harmonic", "values", "calibrate"):
        fail("delta kind must be constant, harmonic, log_harmonic, values or calibrate", "delta")
    if kind == "calibrate":
        ts = cfg.training_seeds
        if not isinstance(ts, list) or len(ts) < 5:
            fail("calibration needs at least 5 training_seeds", "training_seeds" if ts is not None else "delta")
        if set(ts) & set(seeds):
            fail("training_seeds must be disjoint from seeds", "training_seeds")
    return cfg


# -- builders ---------------------------------------------------------------------------

def build_driver(d: dict) -> DriverSpec:
    kind = d.get("kind")
    if kind == "iid":
        return DriverSpec.iid(d["probabilities"])
    if kind == "markov":
        return DriverSpec.markov(d["matrix"], d.get("stationary", True))
    if kind == "rotation":
        return DriverSpec.rotation(d.get("breakpoints", (0.0, 0.5)), d.get("angle", GOLDEN), d.get("x0"))
    if kind == "deterministic":
        return DriverSpec.deterministic(d["sequence"], d.get("alphabet_size"))
    raise SpecError(f"unknown driver kind {kind!r}")


def build_space(cfg: ExperimentConfig) -> MetricSpace:
    return space_from_dict(cfg.space)


def build_basepoint(space: MetricSpace, value):
    if value is None:
        return space.origin()
    if isinstance(space, PoincareDisk):
        return np.complex128(_complex(value))
    return np.asarray(value, dtype=float)


def build_system(cfg: ExperimentConfig) -> SemicontractionSystem:
    space = build_space(cfg)
    maps = {int(k): make_map(v) for k, v in cfg.maps.items()}
    return SemicontractionSystem(space, maps, build_basepoint(space, cfg.basepoint))


def build_matrices(cfg: ExperimentConfig) -> dict:
    return {int(k): np.atleast_2d(np.asarray(v, dtype=float)) for k, v in cfg.matrices.items()}


def build_cocycle(cfg: ExperimentConfig, spec: DriverSpec) -> SubadditiveCocycle:
    c = cfg.cocycle
    kind = c.get("kind", "orbit")
    if kind == "orbit":
        return OrbitCocycle(build_system(cfg))
    if kind == "walk":
        return walk_cocycle(spec, c["steps"])
    if kind == "birkhoff":
        return birkhoff_cocycle(spec, c["observable"])
    if kind == "additive":
        return additive_cocycle(float(c["c"]))
    if kind == "table":
        return TableCocycle(c["values"])
    if kind == "operator":
        from .oseledets import OperatorNormCocycle

        return OperatorNormCocycle(build_matrices(cfg))
    raise SpecError(f"unknown cocycle kind {kind!r}")


def build_delta(cfg: ExperimentConfig, cocycle: SubadditiveCocycle, spec: DriverSpec,
                A_hat: float | None = None) -> DeltaSchedule:
    d = cfg.delta
    kind = d.get("kind")
    if kind == "constant":
        return DeltaSchedule.constant(float(d.get("value", 0.0)))
    if kind == "harmonic":
        return DeltaSchedule.harmonic(float(d["scale"]))
    if kind == "log_harmonic":
        return DeltaSchedule.log_harmonic(float(d["scale"]))
    if kind == "values":
        return DeltaSchedule.tabulated(d["values"], d.get("cap"))
    horizon = cfg.calibration_horizon or cfg.horizon
    return calibrate_delta(cocycle, spec, cfg.training_seeds, horizon, float(d["rho"]),
                           eps0=float(d.get("eps0", 1e-9)), method=d.get("method", "envelope"),
                           samples_per_path=int(d.get("samples_per_path", 8)), A_hat=A_hat)
