"""Pipeline configuration: dataclasses loaded from a TOML file."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class BackendConfig:
    kind: str = "local"  # local | remote
    url: str = ""
    timeout: float = 10.0
    retries: int = 2


@dataclass
class ExtractorConfig:
    kind: str = "statistical"  # statistical | llm
    endpoint: str = ""
    fallback: bool = True
    template_en: str = "keywords_en.txt"
    template_target: str = ""


@dataclass
class EmbedderConfig:
    kind: str = "hashing"  # hashing | remote
    dim: int = 256
    seed: int | None = None  # defaults to the pipeline seed
    endpoint: str = ""
    batch_size: int = 32
    token_budget: int = 512


@dataclass
class GeneratorConfig:
    kind: str = "template"  # template | llm
    endpoint: str = ""
    max_tokens: int = 1024
    template: str = ""  # path to an answer template; empty -> bundled one for the query language


@dataclass
class DecomposerConfig:
    kind: str = "off"  # off | passthrough | llm
    endpoint: str = ""


@dataclass
class PipelineConfig:
    keyword_k: int = 10
    per_query_topk: int = 10
    rerank_k: int = 5
    target_lang: str = "ko"
    corpus: str = ""
    index: str = ""
    seed: int = 0
    workers: int = 1
    prompt_budget: int = 16000
    parse_retries: int = 1
    allow_partial: bool = True
    record_timings: bool = True
    timeout: float = 60.0
    backend: BackendConfig = field(default_factory=BackendConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    decomposer: DecomposerConfig = field(default_factory=DecomposerConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("keyword_k", "per_query_topk", "rerank_k", "workers", "prompt_budget"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.keyword_k > 10:
            raise ConfigError("keyword_k must be <= 10")
        choices = {
            "backend": ("local", "remote"),
            "extractor": ("statistical", "llm"),
            "embedder": ("hashing", "remote"),
            "generator": ("template", "llm"),
            "decomposer": ("off", "passthrough", "llm"),
        }
        for section, kinds in choices.items():
            kind = getattr(self, section).kind
            if kind not in kinds:
                raise ConfigError(f"{section}.kind must be one of {kinds}, got {kind!r}")
        for section in ("backend", "extractor", "embedder", "generator", "decomposer"):
            sub = getattr(self, section)
            needs = "url" if section == "backend" else "endpoint"
            if sub.kind in ("remote", "llm") and not getattr(sub, needs):
                raise ConfigError(f"{section}.{needs} is required for kind {sub.kind!r}")
        if self.backend.kind == "local" and not (self.corpus or self.index):
            raise ConfigError("local backend needs 'corpus' or 'index'")

    @property
    def deterministic(self) -> bool:
        return (
            self.backend.kind == "local"
            and self.extractor.kind == "statistical"
            and self.embedder.kind == "hashing"
            and self.generator.kind == "template"
            and self.decomposer.kind != "llm"
        )

    @property
    def embed_seed(self) -> int:
        return self.seed if self.embedder.seed is None else self.embedder.seed

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "backend": BackendConfig,
    "extractor": ExtractorConfig,
    "embedder": EmbedderConfig,
    "generator": GeneratorConfig,
    "decomposer": DecomposerConfig,
}
_PATH_KEYS = {("", "corpus"), ("", "index"), ("generator", "template"),
              ("extractor", "template_en"), ("extractor", "template_target")}


def _build(cls, data: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    return data


def config_from_dict(data: dict, base_dir: str | Path | None = None) -> PipelineConfig:
    data = dict(data)
    _build(PipelineConfig, data, "")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            sub = dict(value)
            _build(_SECTIONS[key], sub, key)
            if base_dir is not None:
                for k, v in sub.items():
                    if (key, k) in _PATH_KEYS and v and (Path(base_dir) / v).exists():
                        sub[k] = str(Path(base_dir) / v)
            kwargs[key] = _SECTIONS[key](**sub)
        else:
            if base_dir is not None and ("", key) in _PATH_KEYS and value:
                value = str(Path(base_dir) / value)
            kwargs[key] = value
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent)


def derive_seed(base: int, *names: str) -> int:
    """Stable 63-bit seed for a named stream (e.g. stage name + query id)."""
    h = hashlib.sha256(str(base).encode())
    for name in names:
        h.update(b"\x00" + str(name).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big") >> 1
