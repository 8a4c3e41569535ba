"""YAML configuration with ``${ENV_VAR}`` interpolation and strict keys."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


class ConfigError(ValueError):
    pass


def _interpolate(value):
    if isinstance(value, str):
        def sub(m):
            name, default = m.group(1), m.group(2)
            if name in os.environ:
                return os.environ[name]
            if default is not None:
                return default
            raise ConfigError(f"environment variable {name} is not set")

        return _ENV_REF.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass
class ProviderConfig:
    kind: str = "mock"                 # mock | openai
    model: str = "mock"
    endpoint: str = ""
    api_key_env: str = ""
    script: str = ""                   # mock: path to the script file
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def api_key(self) -> str:
        return os.environ.get(self.api_key_env, "") if self.api_key_env else ""


@dataclass
class EmbedderConfig:
    kind: str = "hash"                 # hash | none
    dimension: int = 64


@dataclass
class RetrievalConfig:
    kind: str = "sparse"               # sparse | dense
    k: int = 10


@dataclass
class GenerationConfig:
    char_budget: int = 48_000
    clock: str = "now"                 # "now" or a fixed ISO timestamp


@dataclass
class ConstructionConfig:
    sandbox_python: str = ""
    timeout_s: float = 5.0
    memory_mb: int = 256
    fallback: bool = True
    max_set_size: int = 5
    seeds_file: str = ""
    seed_facts_file: str = ""


@dataclass
class ServiceConfig:
    port: int = 8765
    data_path: str = "annotation-journal.jsonl"
    tokens: dict = field(default_factory=dict)
    required_annotators: int = 2
    lease_minutes: float = 30.0
    randomize_seed: int = 0
    static_dir: str = ""


@dataclass
class Config:
    corpus: str = ""
    examples: str = ""
    sets: str = ""
    workdir: str = "out"
    cache_dir: str = ""
    templates_dir: str = ""
    concurrency: int = 4
    tie_band: float = 0.0
    bootstrap_seed: int = 13
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    construction: ConstructionConfig = field(default_factory=ConstructionConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)


_SECTIONS = {
    "provider": ProviderConfig,
    "embedder": EmbedderConfig,
    "retrieval": RetrievalConfig,
    "generation": GenerationConfig,
    "construction": ConstructionConfig,
    "service": ServiceConfig,
}


def _build(cls, data: dict, path: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key {path}{sorted(unknown)[0]!r}")
    return cls(**data)


def load_config(path: str | Path | None, overrides: dict | None = None) -> Config:
    """Load config from a YAML file; ``overrides`` (flag values) win over
    file values."""
    data: dict = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        data = _interpolate(raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, sub = key.split(".", 1)
            data.setdefault(section, {})[sub] = value
        else:
            data[key] = value
    sections = {}
    for name, cls in _SECTIONS.items():
        body = data.pop(name, {}) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        sections[name] = _build(cls, body, f"{name}.")
    config = _build(Config, {**data, **sections}, "")
    return config
