"""Plain-text configuration: INI sections of ``key = value`` lines.

Recognised sections are [model], [train], [sampler], [data], [eval],
[bootstrap], [pipeline] and [run]. Unknown keys are rejected so typos
surface as usage errors instead of silently falling back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import fields

from ..errors import UsageError
from .models import ModelConfig
from .sampling import SamplerConfig
from .training import TrainConfig

SECTIONS = ("run", "model", "train", "sampler", "data", "eval", "bootstrap", "pipeline")


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.replace(",", " ").split())
    return raw.strip()


def build_dataclass(cls, values: dict, section: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    defaults = cls()
    for key, raw in values.items():
        if key not in known:
            raise UsageError(f"unknown key {key!r} in [{section}]")
        try:
            kwargs[key] = _coerce(raw, getattr(defaults, key)) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise UsageError(f"[{section}] {key}: {exc}") from None
    return cls(**kwargs)


def read_config(path=None, text: str | None = None) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    out = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise UsageError(f"unknown config section [{name}]")
        out[name] = dict(parser[name])
    return out


def model_config(cfg: dict) -> ModelConfig:
    return build_dataclass(ModelConfig, cfg.get("model", {}), "model")


def train_config(cfg: dict) -> TrainConfig:
    return build_dataclass(TrainConfig, cfg.get("train", {}), "train")


def sampler_config(cfg: dict) -> SamplerConfig:
    return build_dataclass(SamplerConfig, cfg.get("sampler", {}), "sampler")


def format_config(cfg: dict) -> str:
    lines = []
    for section in SECTIONS:
        if section in cfg and cfg[section]:
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in cfg[section].items()]
            lines.append("")
    return "\n".join(lines)
