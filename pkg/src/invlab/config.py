"""Experiment configuration: a versioned TOML file.

Example with every key (omitted keys take the defaults shown)::

    schema_version = 1

    [params]
    c = 1.0
    c_h = 1.0
    c_p = 3.0
    q = 0.7
    x0 = 0.0

    [demand]
    family = "uniform"          # uniform | triangular | bump | mixture
    support = [0.0, 1.0]
    shape = {}                  # e.g. {mode = 0.5} or {alpha = 2, beta = 2}
    M = 512                     # default max(64, ceil(512 J))

    [run]
    n = 50                      # horizon for solve / simulate / diagnose / compare
    horizons = [25, 50, 100, 200]
    R = 10000
    master_seed = 20240611      # INVLAB_SEED overrides
    h = 0.00390625              # default J / 256
    retain = 5
    policy_a = "optimal"
    policy_b = "never_order"    # or "myopic", "fixed_base_stock:0.9"
    hoeffding_multipliers = [0.5, 1.0, 2.0]   # lambda = m * sqrt(n) * B
    probes = 20                 # conditional-mean probe pairs

    [output]
    directory = "out"
    formats = ["json", "csv"]   # csv adds plot-data files
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .model import DemandModel, DemandSpec, ModelParams, make_demand, params_errors
from .simulate import PolicySpec

SCHEMA_VERSION = 1
SEED_ENV = "INVLAB_SEED"

KEYS = {
    "params": {"c", "c_h", "c_p", "q", "x0"},
    "demand": {"family", "support", "shape", "M"},
    "run": {"n", "horizons", "R", "master_seed", "h", "retain", "policy_a", "policy_b",
            "hoeffding_multipliers", "probes"},
    "output": {"directory", "formats"},
}
RUN_DEFAULTS = {
    "n": 50,
    "horizons": [25, 50, 100, 200],
    "R": 10000,
    "master_seed": 20240611,
    "h": None,
    "retain": 5,
    "policy_a": "optimal",
    "policy_b": "never_order",
    "hoeffding_multipliers": [0.5, 1.0, 2.0],
    "probes": 20,
}
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Every problem found in a config, one message per entry of ``errors``."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RunSpec:
    n: int
    horizons: tuple[int, ...]
    R: int
    master_seed: int
    h: float
    retain: int
    policy_a: str
    policy_b: str
    hoeffding_multipliers: tuple[float, ...]
    probes: int


@dataclass(frozen=True)
class OutputSpec:
    directory: Path
    formats: tuple[str, ...] = FORMATS


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    demand: DemandModel
    run: RunSpec
    output: OutputSpec
    source: dict = field(default_factory=dict, compare=False)

    @property
    def demand_spec(self) -> DemandSpec:
        return self.demand.spec


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def load_config(path, env: dict | None = None) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    path = Path(path)
    env = os.environ if env is None else env
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError([f"{path}: no such file"]) from None
    except UnicodeDecodeError as exc:
        raise ConfigError([f"{path}: not valid UTF-8 ({exc})"]) from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: parse error: {exc}"]) from None
    return parse_config(raw, env, base=path.parent)


def parse_config(raw: dict, env: dict | None = None, base: Path | None = None) -> ExperimentConfig:
    env = {} if env is None else env
    errors: list[str] = []

    version = raw.get("schema_version")
    if version is None:
        errors.append("schema_version: missing")
    elif version != SCHEMA_VERSION:
        errors.append(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    for key in sorted(set(raw) - set(KEYS) - {"schema_version"}):
        errors.append(f"{key}: unknown key")
    blocks = {}
    for name, allowed in KEYS.items():
        block = raw.get(name, {})
        if not isinstance(block, dict):
            errors.append(f"{name}: must be a table")
            block = {}
        for key in sorted(set(block) - allowed):
            errors.append(f"{name}.{key}: unknown key")
        blocks[name] = block

    # params
    pb = blocks["params"]
    pvals = {}
    for key in ("c", "c_h", "c_p", "q"):
        if key not in pb:
            errors.append(f"params.{key}: missing")
        elif not _is_num(pb[key]):
            errors.append(f"params.{key}: must be a finite number")
        else:
            pvals[key] = float(pb[key])
    x0 = pb.get("x0", 0.0)
    if not _is_num(x0):
        errors.append("params.x0: must be a finite number")
    else:
        pvals["x0"] = float(x0)

    # run
    rb = {**RUN_DEFAULTS, **blocks["run"]}
    n = rb["n"]
    if not _is_int(n) or n < 1:
        errors.append("run.n: must be a positive integer")
        n = 1
    horizons = rb["horizons"]
    if not isinstance(horizons, list) or not all(_is_int(v) and v >= 1 for v in horizons):
        errors.append("run.horizons: must be a list of positive integers")
        horizons = []
    elif any(b <= a for a, b in zip(horizons, horizons[1:])):
        errors.append("run.horizons: must be strictly increasing")
    R = rb["R"]
    if not _is_int(R) or R < 2:
        errors.append("run.R: must be an integer >= 2")
    seed = rb["master_seed"]
    if env.get(SEED_ENV) not in (None, ""):
        try:
            seed = int(env[SEED_ENV], 0)
        except ValueError:
            errors.append(f"{SEED_ENV}: not an integer ({env[SEED_ENV]!r})")
    if not _is_int(seed) or seed < 0:
        errors.append("run.master_seed: must be a non-negative integer")
    retain = rb["retain"]
    if not _is_int(retain) or retain < 0:
        errors.append("run.retain: must be a non-negative integer")
    probes = rb["probes"]
    if not _is_int(probes) or probes < 1:
        errors.append("run.probes: must be a positive integer")
    mult = rb["hoeffding_multipliers"]
    if not isinstance(mult, list) or not mult or not all(_is_num(v) and v >= 0 for v in mult):
        errors.append("run.hoeffding_multipliers: must be a non-empty list of numbers >= 0")
        mult = []
    for key in ("policy_a", "policy_b"):
        try:
            spec = rb[key]
            if not isinstance(spec, str):
                raise ValueError("must be a string")
            if spec != "optimal":
                parsed = PolicySpec.parse(spec)
                if parsed.level is not None and not math.isfinite(parsed.level):
                    raise ValueError("level must be finite")
        except ValueError as exc:
            errors.append(f"run.{key}: {exc}")

    # demand
    demand = None
    db = blocks["demand"]
    if "family" not in db:
        errors.append("demand.family: missing")
    if "support" not in db:
        errors.append("demand.support: missing")
    if "family" in db and "support" in db:
        try:
            demand = make_demand(db)
        except (ValueError, TypeError, KeyError) as exc:
            errors.append(f"demand: {exc}")
    h = rb["h"]
    if h is not None and (not _is_num(h) or h <= 0):
        errors.append("run.h: must be a positive number")
    elif demand is not None:
        h = demand.J / 256 if h is None else float(h)

    params = None
    if len(pvals) == 5:
        problems = params_errors(SimpleNamespace(n=n, unchecked=False, **pvals))
        errors.extend(f"params: {msg}" for msg in problems)
        if not problems:
            params = ModelParams(n=n, **pvals)

    # output
    ob = blocks["output"]
    directory = ob.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        errors.append("output.directory: must be a non-empty string")
        directory = "out"
    formats = ob.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not all(f in FORMATS for f in formats):
        errors.append(f"output.formats: must be a list drawn from {list(FORMATS)}")
        formats = list(FORMATS)
    out_dir = Path(directory)
    if base is not None and not out_dir.is_absolute():
        out_dir = base / out_dir

    if errors:
        raise ConfigError(errors)
    run = RunSpec(n, tuple(horizons), R, seed, h, retain, rb["policy_a"], rb["policy_b"],
                  tuple(float(m) for m in mult), probes)
    return ExperimentConfig(params, demand, run, OutputSpec(out_dir, tuple(formats)), raw)
