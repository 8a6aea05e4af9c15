"""Prompt template files and ``{{placeholder}}`` rendering."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

_PLACEHOLDER = re.compile(r"\{\{\s*(\w+)\s*\}\}")

DEFAULT_MARKERS = {"title": "## Title", "introduction": "## Introduction", "main_body": "## Main Body"}


class TemplateError(ValueError):
    pass


def placeholders(text: str) -> set[str]:
    return set(_PLACEHOLDER.findall(text))


def render(text: str, **bindings) -> str:
    """Substitute ``{{name}}`` placeholders in one pass; bound values are never re-scanned."""
    unbound = placeholders(text) - bindings.keys()
    if unbound:
        raise TemplateError(f"unbound placeholder(s): {', '.join(sorted(unbound))}")
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), text)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    markers: dict = field(default_factory=lambda: dict(DEFAULT_MARKERS))
    reminder: str = ""
    required: tuple = ("query", "documents")

    def __post_init__(self):
        missing = set(self.required) - placeholders(self.body)
        if missing:
            raise TemplateError(f"template {self.name!r} lacks {', '.join('{{%s}}' % m for m in sorted(missing))}")
        if set(self.markers) != set(DEFAULT_MARKERS):
            raise TemplateError(f"template {self.name!r} must define markers {sorted(DEFAULT_MARKERS)}")

    @classmethod
    def from_toml(cls, path: str | Path) -> "PromptTemplate":
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        return cls._from_mapping(data, default_name=Path(path).stem)

    @classmethod
    def _from_mapping(cls, data: dict, default_name: str) -> "PromptTemplate":
        if "body" not in data:
            raise TemplateError(f"template {default_name!r} has no body")
        return cls(
            name=data.get("name", default_name),
            body=data["body"],
            markers=dict(data.get("markers", DEFAULT_MARKERS)),
            reminder=data.get("reminder", ""),
        )


def builtin_text(filename: str) -> str:
    return resources.files("shrag").joinpath("templates", filename).read_text(encoding="utf-8")


def load_text(name_or_path: str) -> str:
    """A bundled template filename, or a path to an edited copy."""
    path = Path(name_or_path)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    return builtin_text(name_or_path)


def load_answer_template(lang: str = "en", path: str | None = None) -> PromptTemplate:
    if path:
        return PromptTemplate.from_toml(path)
    data = tomllib.loads(builtin_text(f"answer_{lang}.toml"))
    return PromptTemplate._from_mapping(data, default_name=f"answer_{lang}")
