"""Run configuration: an INI file with one section per experiment.

Every field has a default, unknown sections or keys are rejected, and
floats are written with ``repr`` so that ``dump(load(text))`` reproduces
the values bit for bit.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, asdict, replace
from typing import get_type_hints


class ConfigError(ValueError):
    pass


@dataclass
class SurfaceSection:
    kind: str = "torus"                 # torus | flat | fourier
    R: float = 2.0
    a: float = 1.0
    rho: float = 1.0
    L: float = 6.283185307179586
    coefficients: tuple = (2.0, 0.5)    # fourier: r(s) = c0 + sum c_k cos(2 pi k s / L_s)
    L_s: float = 6.283185307179586


@dataclass
class FactorSection:
    kind: str = "flat"                  # flat | coupled | constant
    N: int = 8
    amplitude: float = 1.0
    coupling: float = 0.3
    value: float = 1.0                  # constant factor


@dataclass
class GridSection:
    n_t: int = 11
    N_s: int = 512
    N_phi: int = 96
    backend: str = "separable"          # separable | coupled
    method: str = "lapack"              # lapack | native (dense solves)


@dataclass
class SpectrumSection:
    Lambda_max: float = 20.0
    window_center: float = 0.0          # coupled backend: window [c - w, c + w]
    window_half_width: float = 0.0


@dataclass
class BeamSection:
    m_min: int = 10
    m_max: int = 80
    m_step: int = 5
    m1: int = 0
    maslov_p: int = 0
    c_safety: float = 1.1
    N_s: int = 1024
    deltas: tuple = (0.1, 0.2, 0.4, 0.8)


@dataclass
class FlowSection:
    Lambda_max: float = 6.0
    N_s: int = 256
    n_t: int = 101
    gap_floor: float = 1e-3
    hadamard_t: tuple = (0.2, 0.35, 0.5, 0.65, 0.8)
    hadamard_delta: float = 1e-3


@dataclass
class ConcentrateSection:
    regime: str = "separable"           # separable | coupled
    m_min: int = 10
    m_max: int = 40
    m_step: int = 5
    epsilons: tuple = (1.0, 0.3, 0.1)
    q_rule: str = "inv_sqrt"            # inv_sqrt | median_mass
    c: float = 1.1
    pad: float = 1e-8
    n_t: int = 41
    N_s: int = 512
    N_phi: int = 96
    m0: int = 0                         # 0: median of the m-range


@dataclass
class DoubleWellSection:
    hbar: tuple = (0.2, 0.15, 0.1, 0.08)
    X_cut: float = 3.0
    N_x: int = 2001
    k_max: int = 6


@dataclass
class SamplerSection:
    N: int = 8
    n_basis: int = 20
    n_grid: int = 10000


@dataclass
class RunSection:
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    plot: bool = False


@dataclass
class RunConfig:
    surface: SurfaceSection = field(default_factory=SurfaceSection)
    factor: FactorSection = field(default_factory=FactorSection)
    grid: GridSection = field(default_factory=GridSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    beam: BeamSection = field(default_factory=BeamSection)
    flow: FlowSection = field(default_factory=FlowSection)
    concentrate: ConcentrateSection = field(default_factory=ConcentrateSection)
    doublewell: DoubleWellSection = field(default_factory=DoubleWellSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    run: RunSection = field(default_factory=RunSection)

    def override(self, section: str, **values) -> "RunConfig":
        sec = getattr(self, section)
        return replace(self, **{section: replace(sec, **values)})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(text: str, kind, default, where: str):
    try:
        if kind is bool:
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            item = type(default[0]) if default else float
            parts = [p for p in (x.strip() for x in text.split(",")) if p]
            return tuple(item(p) for p in parts)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r}") from exc


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    for section in parser.sections():
        if section not in names:
            raise ConfigError(f"unknown section [{section}]")
        sec = getattr(cfg, section)
        hints = get_type_hints(type(sec))
        known = {f.name: f for f in fields(sec)}
        values = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse(raw, hints[key], getattr(sec, key), f"[{section}] {key}")
        setattr(cfg, section, replace(sec, **values))
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def dumps(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for f in fields(cfg):
        sec = getattr(cfg, f.name)
        parser[f.name] = {g.name: _format(getattr(sec, g.name)) for g in fields(sec)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


_CHOICES = {
    ("surface", "kind"): ("torus", "flat", "fourier"),
    ("factor", "kind"): ("flat", "coupled", "constant"),
    ("grid", "backend"): ("separable", "coupled"),
    ("grid", "method"): ("lapack", "native"),
    ("concentrate", "regime"): ("separable", "coupled"),
    ("concentrate", "q_rule"): ("inv_sqrt", "median_mass"),
}


def validate(cfg: RunConfig) -> None:
    for (section, key), allowed in _CHOICES.items():
        value = getattr(getattr(cfg, section), key)
        if value not in allowed:
            raise ConfigError(f"[{section}] {key} must be one of {allowed}, got {value!r}")
    if cfg.grid.n_t < 2 or cfg.flow.n_t < 2 or cfg.concentrate.n_t < 2:
        raise ConfigError("t-grids need at least 2 points")
    for sec in (cfg.beam, cfg.concentrate):
        if sec.m_min < 1 or sec.m_max < sec.m_min or sec.m_step < 1:
            raise ConfigError("invalid m-range")
    if cfg.run.jobs < 1:
        raise ConfigError("[run] jobs must be >= 1")
    if cfg.run.seed < 0 or cfg.run.seed >= 2 ** 64:
        raise ConfigError("[run] seed must be an unsigned 64-bit integer")
    if not cfg.doublewell.hbar or min(cfg.doublewell.hbar) <= 0:
        raise ConfigError("[doublewell] hbar values must be positive")
