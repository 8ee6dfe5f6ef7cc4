"""Run configuration read from an INI file.

Example::

    [arm]
    m1 = 1.0
    F_mag = 10.0          ; or F = 0.0, -10.0

    [sampler]
    coef_range = -1, 1
    T_range = 1, 10
    rho = 0.5
    qa = 0, 0
    qb = 0.785398, 0.523599
    seed = 1

    [quadrature]
    n_grid = 1024
    dead_band = 1e-9

    [classifier]
    lambda = 1e-6
    loss = squared_hinge
    target_abstention = 0.2
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .classifier import DEFAULT_RIDGE
from .dynamics import ArmParameters, ParameterError
from .energyflow import DEFAULT_DEAD_BAND, DEFAULT_N_GRID
from .trajectory import SamplerConfig

SECTIONS = ("arm", "sampler", "quadrature", "classifier", "paths")
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    n_grid: int = DEFAULT_N_GRID
    dead_band: float = DEFAULT_DEAD_BAND


@dataclass(frozen=True)
class ClassifierConfig:
    ridge: float = DEFAULT_RIDGE
    loss: str = "squared_hinge"
    target_abstention: float = 0.2
    epsilon: float | None = None


@dataclass(frozen=True)
class RunConfig:
    arm: ArmParameters = field(default_factory=ArmParameters)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    paths: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "arm": asdict(self.arm),
            "sampler": asdict(self.sampler),
            "quadrature": asdict(self.quadrature),
            "classifier": asdict(self.classifier),
            "paths": dict(self.paths),
            "seed": self.seed,
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _vector(text: str, n: int, key: str) -> tuple:
    parts = [p.strip() for p in text.strip().strip("()[]").split(",") if p.strip()]
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _number(section, key, cast=float):
    try:
        return cast(section[key])
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from exc


def _arm(section) -> ArmParameters:
    kw = {}
    scalar = {f.name for f in fields(ArmParameters)} - {"F"}
    for key, value in section.items():
        if key in scalar:
            kw[key] = _number(section, key)
        elif key == "F":
            kw["F"] = _vector(value, 2, "[arm] F")
        elif key == "F_mag":
            kw["F"] = (0.0, 0.0 - _number(section, key))
        else:
            raise ConfigError(f"[arm] unknown key {key!r}")
    try:
        return ArmParameters(**kw)
    except ParameterError as exc:
        raise ConfigError(f"[arm] {exc}") from exc


def _sampler(section):
    kw = {}
    seed = None
    for key, value in section.items():
        if key in ("coef_range", "T_range", "qa", "qb"):
            kw[key] = _vector(value, 2, f"[sampler] {key}")
        elif key == "rho":
            kw[key] = _number(section, key)
        elif key == "max_attempts":
            kw[key] = _number(section, key, int)
        elif key == "seed":
            seed = _number(section, key, int)
        else:
            raise ConfigError(f"[sampler] unknown key {key!r}")
    try:
        return SamplerConfig(**kw), seed
    except ValueError as exc:
        raise ConfigError(f"[sampler] {exc}") from exc


def _quadrature(section):
    kw = {}
    for key in section:
        if key == "n_grid":
            kw[key] = _number(section, key, int)
        elif key == "dead_band":
            kw[key] = _number(section, key)
        else:
            raise ConfigError(f"[quadrature] unknown key {key!r}")
    q = QuadratureConfig(**kw)
    if q.n_grid < 64 or q.n_grid & (q.n_grid - 1):
        raise ConfigError(f"[quadrature] n_grid must be a power of two >= 64, got {q.n_grid}")
    if q.dead_band < 0:
        raise ConfigError("[quadrature] dead_band must be non-negative")
    return q


def _classifier(section):
    kw = {}
    for key, value in section.items():
        if key in ("lambda", "ridge"):
            kw["ridge"] = _number(section, key)
        elif key == "loss":
            if value not in ("squared", "squared_hinge"):
                raise ConfigError(f"[classifier] loss must be squared or squared_hinge, got {value!r}")
            kw["loss"] = value
        elif key in ("target_abstention", "epsilon"):
            kw[key] = _number(section, key)
        else:
            raise ConfigError(f"[classifier] unknown key {key!r}")
    c = ClassifierConfig(**kw)
    if not 0 <= c.target_abstention < 1:
        raise ConfigError("[classifier] target_abstention must lie in [0, 1)")
    return c


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys are case-sensitive (I1, H, F)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    kw = {}
    seed = 0
    if parser.has_section("arm"):
        kw["arm"] = _arm(parser["arm"])
    if parser.has_section("sampler"):
        kw["sampler"], s = _sampler(parser["sampler"])
        seed = seed if s is None else s
    if parser.has_section("quadrature"):
        kw["quadrature"] = _quadrature(parser["quadrature"])
    if parser.has_section("classifier"):
        kw["classifier"] = _classifier(parser["classifier"])
    if parser.has_section("paths"):
        kw["paths"] = dict(parser["paths"])
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return RunConfig(seed=seed, **kw)


def load_config(path=None) -> RunConfig:
    """Load a run configuration; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
