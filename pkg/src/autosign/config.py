"""Run configuration: flat ``section.key = value`` text.

Sections map onto the library dataclasses::

    run.seed
    data.root, data.modality, data.max_frames
    model.*            ModelConfig (vocab_size and input_dim are derived)
    train.*            TrainConfig
    augment.*          AugConfig, augment.part_aware.* for PartAwareConfig
    synth.*            SynthConfig plus SplitPlan (n_train, n_dev, ...)
    ablate.*           AblateConfig

Unknown keys and malformed values raise ConfigError. Blank lines and lines
starting with ``#`` are ignored.
"""
from __future__ import annotations

import os
import types
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .augment import AugConfig, PartAwareConfig
from .errors import ConfigError
from .model import ModelConfig
from .pose_data import MODALITIES, modality_joints
from .synth import SplitPlan, SynthConfig
from .training import TrainConfig

SEED_ENV = "AUTOSIGN_SEED"


@dataclass
class DataConfig:
    root: str = "data"
    modality: str = "body_hands"
    max_frames: int | None = None


@dataclass
class AblateConfig:
    kind: str = "autoregressive"
    modalities: tuple[str, ...] = tuple(MODALITIES)
    compressor_layers: tuple[int, ...] = (0, 1, 2, 3)
    epochs: int | None = None  # None keeps train.epochs


@dataclass
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=lambda: ModelConfig(vocab_size=1))
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    split: SplitPlan = field(default_factory=SplitPlan)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def train_config(self) -> TrainConfig:
        """TrainConfig with the run-level seed and data options folded in."""
        return replace(self.train, seed=self.seed, modality=self.data.modality,
                       max_frames=self.data.max_frames)

    def to_text(self) -> str:
        lines = [f"run.seed = {self.seed}"]
        for key, (path, _) in sorted(_schema().items()):
            if key == "run.seed":
                continue
            lines.append(f"{key} = {_format(_get(self, path))}")
        return "\n".join(lines) + "\n"


# (attribute path on RunConfig, type hint) for every accepted key
_SKIP = {
    "model": {"vocab_size", "input_dim"},
    "train": {"augment", "seed", "modality", "max_frames"},
    "augment": {"part_aware"},
}


def _fields(cls, section: str, path: tuple[str, ...], out: dict) -> None:
    hints = typing.get_type_hints(cls)
    for f in fields(cls):
        if f.name in _SKIP.get(section, ()):
            continue
        out[f"{section}.{f.name}"] = (path + (f.name,), hints[f.name])


_SCHEMA: dict | None = None


def _schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        out = {"run.seed": (("seed",), int)}
        _fields(DataConfig, "data", ("data",), out)
        _fields(ModelConfig, "model", ("model",), out)
        _fields(TrainConfig, "train", ("train",), out)
        _fields(AugConfig, "augment", ("train", "augment"), out)
        _fields(PartAwareConfig, "augment.part_aware", ("train", "augment", "part_aware"), out)
        _fields(SynthConfig, "synth", ("synth",), out)
        _fields(SplitPlan, "synth", ("split",), out)
        _fields(AblateConfig, "ablate", ("ablate",), out)
        _SCHEMA = out
    return _SCHEMA


def known_keys() -> list[str]:
    return sorted(_schema())


def _get(obj, path):
    for name in path:
        obj = getattr(obj, name)
    return obj


def _set(obj, path, value):
    """Functional update along ``path``; dataclass validation reruns."""
    if len(path) == 1:
        return replace(obj, **{path[0]: value})
    child = getattr(obj, path[0])
    return replace(obj, **{path[0]: _set(child, path[1:], value)})


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse(raw: str, hint, key: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    try:
        if origin in (typing.Union, types.UnionType):
            inner = [a for a in args if a is not type(None)]
            if raw.lower() in ("none", ""):
                return None
            return _parse(raw, inner[0], key)
        if origin is tuple:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(_parse(s, args[0], key) for s in items)
            if len(items) != len(args):
                raise ConfigError(f"{key}: expected {len(args)} comma-separated values, got {raw!r}")
            return tuple(_parse(s, a, key) for s, a in zip(items, args))
        if hint is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    schema = _schema()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        path, hint = schema[key]
        try:
            cfg = _set(cfg, path, _parse(raw, hint, key))
        except ValueError as exc:  # dataclass validation
            raise ConfigError(f"line {lineno}: {exc}") from None
    return validate(cfg)


def validate(cfg: RunConfig) -> RunConfig:
    try:
        modality_joints(cfg.data.modality)
        for m in cfg.ablate.modalities:
            modality_joints(m)
        replace(cfg.model, vocab_size=max(cfg.model.vocab_size, 1)).validate()
        cfg.train_config().validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if any(d not in (0, 1, 2, 3) for d in cfg.ablate.compressor_layers):
        raise ConfigError("ablate.compressor_layers must be drawn from 0..3")
    return cfg


def load_config(path=None, seed: int | None = None, env=None) -> RunConfig:
    """Read a config file (or defaults when ``path`` is None), then apply the
    seed precedence: ``seed`` argument, then $AUTOSIGN_SEED, then run.seed."""
    text = Path(path).read_text(encoding="utf-8") if path is not None else ""
    cfg = parse_config_text(text)
    env = os.environ if env is None else env
    if seed is None and env.get(SEED_ENV, "").strip():
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    return cfg

