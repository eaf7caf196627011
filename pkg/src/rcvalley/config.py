"""INI configuration for experiments.

A config file has four sections. Every key is optional; missing keys fall
back to per-system defaults (see ``SYSTEM_DEFAULTS``)::

    [system]
    kind = kse                 ; ab | km | collision | kse | cgle
    encoding = real            ; magnitude | real_imag | real
    t0 = 0.0                   ; NLSE sampling origin
    <any field of NlseParams / KseParams / CglParams>

    [esn]
    n = 1024
    input_scale = 1.0          ; alpha
    transient_steps = 10       ; S
    ridge = 1e-4               ; Gamma

    [topology]
    kind = directed            ; directed | undirected | small_world
    avg_degree = 3
    rewire_prob = 0.0

    [sweep]
    rho_grid = logspace(-4, 0.60206, 25)   ; or linspace(a, b, n) or a comma list
    ensemble_size = 20
    train_steps = 20000
    horizon = 400
    start_mode = warm          ; warm | cold
    warmup_steps = 100
    master_seed = 0
    valley_threshold = 0.5
    valley_horizon = none
    heatmap_cutoff = 3.0

``esn.input_dim`` is derived from the system's channel count and
``esn.dt`` from its sampling step. A ``[manifest]`` section, as written
into sweep output directories, is ignored so a manifest can be fed back in.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from pathlib import Path

import numpy as np

from .esn import EsnHyperParams
from .sweep import SYSTEM_KINDS, SweepSpec, SystemSpec
from .targets.nlse import NlseParams
from .targets.spectral import CglParams, KseParams
from .topology import TopologyKind, TopologySpec

SECTIONS = ("system", "esn", "topology", "sweep")
IGNORED_SECTIONS = ("manifest",)

_NLSE_GRID = "linspace(0, 2, 41)"
_LOG_GRID = "logspace(-4, 0.6020599913279624, 25)"

# Full-size defaults per system: reservoir size, ridge and segment lengths.
SYSTEM_DEFAULTS = {
    "ab": {
        "system": {"a": 0.25},
        "esn": {"n": 4992, "ridge": 1e-4},
        "sweep": {"train_steps": 8010, "horizon": 1600, "rho_grid": _NLSE_GRID},
    },
    "km": {
        "system": {"a": 0.7, "role_swap": True},
        "esn": {"n": 4992, "ridge": 1e-4},
        "sweep": {"train_steps": 8010, "horizon": 1600, "rho_grid": _NLSE_GRID},
    },
    "collision": {
        "system": {"a1": 0.14, "a2": 0.34, "dt": math.pi / 40},
        "esn": {"n": 4992, "ridge": 1e-4, "input_scale": 3.0},
        "sweep": {"train_steps": 8010, "horizon": 1600, "rho_grid": _NLSE_GRID},
    },
    "kse": {
        "system": {},
        "esn": {"n": 4992, "ridge": 1e-4},
        "sweep": {"train_steps": 70010, "horizon": 1600, "rho_grid": _LOG_GRID},
    },
    "cgle": {
        "system": {},
        "esn": {"n": 9984, "ridge": 2e-5},
        "sweep": {"train_steps": 80010, "horizon": 1600, "rho_grid": _LOG_GRID},
    },
}

_ESN_KEYS = ("n", "input_scale", "transient_steps", "ridge")
_TOPOLOGY_KEYS = ("kind", "avg_degree", "rewire_prob")
_SWEEP_KEYS = ("rho_grid", "ensemble_size", "train_steps", "horizon", "start_mode",
               "warmup_steps", "master_seed", "valley_threshold", "valley_horizon",
               "heatmap_cutoff")
_SYSTEM_EXTRA = ("kind", "encoding", "t0")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _params_class(kind: str):
    return {"kse": KseParams, "cgle": CglParams}.get(kind, NlseParams)


def parse_rho_grid(text: str) -> tuple[float, ...]:
    """``linspace(a, b, n)``, ``logspace(a, b, n)`` (base-10 exponents) or ``r1, r2, ...``."""
    text = text.strip()
    m = re.fullmatch(r"(linspace|logspace)\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)", text)
    if m:
        fn = np.linspace if m.group(1) == "linspace" else np.logspace
        try:
            a, b = float(m.group(2)), float(m.group(3))
        except ValueError as exc:
            raise ConfigError(f"bad rho_grid bounds in {text!r}") from exc
        return tuple(float(v) for v in fn(a, b, int(m.group(4))))
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse rho_grid {text!r}") from exc


def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot interpret {raw!r} as {type(default).__name__}") from exc
    return raw


def _optional_int(raw: str, key: str):
    raw = raw.strip()
    if raw.lower() in ("", "none"):
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer or 'none', got {raw!r}") from exc


def _dataclass_defaults(cls) -> dict:
    return {f.name: f.default for f in dataclasses.fields(cls)
            if f.default is not dataclasses.MISSING}


def read_config(path=None, overrides=()) -> configparser.ConfigParser:
    """Load an INI file (optional) and apply ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r} in override {item!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value.strip())
    for section in parser.sections():
        if section not in SECTIONS and section not in IGNORED_SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    return parser


def _values(parser, section: str) -> dict:
    return dict(parser.items(section)) if parser.has_section(section) else {}


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")


def system_from_config(parser) -> SystemSpec:
    raw = _values(parser, "system")
    kind = raw.get("kind", "ab").strip()
    if kind not in SYSTEM_KINDS:
        raise ConfigError(f"unknown system kind {kind!r}; choose from {SYSTEM_KINDS}")
    cls = _params_class(kind)
    defaults = _dataclass_defaults(cls)
    _check_keys("system", raw, (*defaults, *_SYSTEM_EXTRA))
    kwargs = dict(SYSTEM_DEFAULTS[kind]["system"])
    for key, value in raw.items():
        if key in defaults:
            kwargs[key] = _coerce(value, defaults[key], f"system.{key}")
    try:
        params = cls(**kwargs)
        encoding = raw.get("encoding")
        t0 = _coerce(raw.get("t0", "0.0"), 0.0, "system.t0")
        return SystemSpec(kind, params, encoding.strip() if encoding else None, t0)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[system] {exc}") from exc


def spec_from_config(parser) -> SweepSpec:
    system = system_from_config(parser)
    kind_defaults = SYSTEM_DEFAULTS[system.kind]

    esn_raw = _values(parser, "esn")
    _check_keys("esn", esn_raw, _ESN_KEYS)
    esn_defaults = _dataclass_defaults(EsnHyperParams)
    esn_kwargs = {"input_dim": system.n_channels, "dt": system.dt, **kind_defaults["esn"]}
    for key, value in esn_raw.items():
        esn_kwargs[key] = _coerce(value, esn_defaults.get(key, 0), f"esn.{key}")

    topo_raw = _values(parser, "topology")
    _check_keys("topology", topo_raw, _TOPOLOGY_KEYS)
    topo_kind = topo_raw.get("kind", TopologyKind.DIRECTED_RANDOM.value).strip()
    avg_degree = _coerce(topo_raw.get("avg_degree", "3"), 3.0, "topology.avg_degree")
    rewire = _coerce(topo_raw.get("rewire_prob", "0"), 0.0, "topology.rewire_prob")

    sweep_raw = {**kind_defaults["sweep"], **_values(parser, "sweep")}
    _check_keys("sweep", sweep_raw, _SWEEP_KEYS)
    sweep_defaults = _dataclass_defaults(SweepSpec)
    sweep_kwargs = {}
    for key, value in sweep_raw.items():
        value = str(value)
        if key == "rho_grid":
            sweep_kwargs[key] = parse_rho_grid(value)
        elif key == "valley_horizon":
            sweep_kwargs[key] = _optional_int(value, "sweep.valley_horizon")
        else:
            sweep_kwargs[key] = _coerce(value, sweep_defaults[key], f"sweep.{key}")

    try:
        esn = EsnHyperParams(**esn_kwargs)
        topology = TopologySpec(TopologyKind(topo_kind), esn.n, avg_degree, rewire)
        return SweepSpec(system=system, esn=esn, topology=topology, **sweep_kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path=None, overrides=()) -> SweepSpec:
    return spec_from_config(read_config(path, overrides))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(getattr(value, "value", value))


def to_config_text(spec: SweepSpec) -> str:
    """Full, explicit INI rendering; ``load_spec`` on it reproduces ``spec``."""
    sys_ = spec.system
    lines = ["[system]", f"kind = {sys_.kind}", f"encoding = {sys_.encoding.value}",
             f"t0 = {sys_.t0!r}"]
    lines += [f"{f.name} = {_fmt(getattr(sys_.params, f.name))}"
              for f in dataclasses.fields(sys_.params)]
    lines += ["", "[esn]"]
    lines += [f"{k} = {_fmt(getattr(spec.esn, k))}" for k in _ESN_KEYS]
    lines += ["", "[topology]", f"kind = {spec.topology.kind.value}",
              f"avg_degree = {spec.topology.avg_degree!r}",
              f"rewire_prob = {spec.topology.rewire_prob!r}"]
    lines += ["", "[sweep]", "rho_grid = " + ", ".join(repr(r) for r in spec.rho_grid)]
    lines += [f"{k} = {_fmt(getattr(spec, k))}" for k in _SWEEP_KEYS[1:]]
    return "\n".join(lines) + "\n"
