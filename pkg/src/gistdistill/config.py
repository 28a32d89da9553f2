"""Run configuration: one TOML file with a section per stage."""
from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gist import StudentConfig
from .integration import ClassifierConfig
from .teacher import TeacherConfig


class ConfigError(ValueError):
    pass


@dataclass
class DistillConfig:
    T: float = 4.0
    mode: str = "teacher-forced"
    geometric: bool = False
    ensemble: int = 3

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("distill.T must be positive")
        if self.mode not in ("teacher-forced", "greedy"):
            raise ConfigError(f"distill.mode must be 'teacher-forced' or 'greedy', got {self.mode!r}")
        if self.ensemble < 1:
            raise ConfigError("distill.ensemble must be >= 1")


@dataclass
class PathsConfig:
    embeddings: str = ""
    vocab_size: int = 50000


SECTIONS = {
    "teacher": TeacherConfig,
    "distill": DistillConfig,
    "student": StudentConfig,
    "classifier": ClassifierConfig,
    "paths": PathsConfig,
}


@dataclass
class RunConfig:
    seed: int = 0
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    student: StudentConfig = field(default_factory=StudentConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _coerce(value: str, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    try:
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"expected a {type(current).__name__}, got {value!r}") from None
    return value


def build_config(tree: dict | None = None, overrides: list[str] = (), seed: int | None = None) -> RunConfig:
    """Validate a parsed tree, apply ``section.key=value`` overrides, resolve the seed.

    Seed precedence: explicit argument, then the file's ``seed``, then ``GD_SEED``.
    """
    tree = {k: (dict(v) if isinstance(v, dict) else v) for k, v in (tree or {}).items()}
    unknown = set(tree) - set(SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        known = {f.name: f for f in fields(SECTIONS[section])}
        if name not in known:
            raise ConfigError(f"unknown key {section}.{name}")
        default = getattr(SECTIONS[section](), name)
        tree.setdefault(section, {})[name] = _coerce(value, default)

    if seed is None:
        seed = tree.get("seed")
    if seed is None and os.environ.get("GD_SEED"):
        seed = int(os.environ["GD_SEED"])
    seed = int(seed or 0)

    built = {}
    for section, cls in SECTIONS.items():
        values = tree.get(section, {})
        names = {f.name for f in fields(cls)}
        bad = set(values) - names
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(bad)}")
        if "seed" in names and "seed" not in values:
            values = {**values, "seed": seed}
        try:
            built[section] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    return RunConfig(seed=seed, **built)


def load_config(path=None, overrides: list[str] = (), seed: int | None = None) -> RunConfig:
    tree = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            tree = tomllib.loads(p.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
    return build_config(tree, overrides, seed)
