"""Structured answer generation: prompt assembly, provider calls, section parsing, query decomposition."""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx

from .engine import ScoredDocument
from .prompts import DEFAULT_MARKERS, PromptTemplate, TemplateError, load_text, render

log = logging.getLogger(__name__)

DEFAULT_PROMPT_BUDGET = 16000
SECTION_NAMES = {"title": "Title", "introduction": "Introduction", "main_body": "Main Body"}
DEFAULT_REMINDER = (
    "Your previous reply did not follow the required format. Answer again using exactly "
    "these section headings, each on its own line: {headings}."
)

_CITATION = re.compile(r"\[(\d+)\]")
_SENTENCE_END = re.compile(r"(?<=[.!?。])\s+")


class AnswerParseError(ValueError):
    def __init__(self, section: str, message: str | None = None):
        super().__init__(message or f"missing section: {section}")
        self.section = section


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class StructuredAnswer:
    title: str
    introduction: str
    main_body: str
    citations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "introduction": self.introduction,
            "main_body": self.main_body,
            "citations": list(self.citations),
        }

    def render(self, markers: dict | None = None) -> str:
        m = markers or DEFAULT_MARKERS
        return (
            f"{m['title']}\n{self.title}\n\n"
            f"{m['introduction']}\n{self.introduction}\n\n"
            f"{m['main_body']}\n{self.main_body}\n"
        )


@dataclass(frozen=True)
class GenerationContext:
    """What the prompt was built from; offline providers use it instead of reading the prompt."""

    query: str
    docs: tuple[ScoredDocument, ...]
    markers: dict = field(default_factory=lambda: dict(DEFAULT_MARKERS))


class GenerationProvider(Protocol):
    def generate(self, prompt: str, context: GenerationContext | None = None, seed: int | None = None) -> str:
        ...


# --- prompt assembly -------------------------------------------------------


def _doc_block(n: int, sd: ScoredDocument) -> str:
    return f"[{n}] id: {sd.doc.id}\nTitle: {sd.doc.title}\nAbstract: {sd.doc.abstract}"


def _fit_blocks(blocks: list[str], available: int, sep: str) -> list[str]:
    """Trim or drop blocks from the end until the joined length fits ``available``."""
    blocks = list(blocks)
    while blocks:
        total = sum(map(len, blocks)) + len(sep) * (len(blocks) - 1)
        excess = total - available
        if excess <= 0:
            return blocks
        last = blocks[-1]
        header_len = len(last.split("\n", 1)[0])
        keep = len(last) - excess - 1  # room for the ellipsis
        if keep >= header_len:
            blocks[-1] = last[:keep] + "…"
            return blocks
        blocks.pop()
    return blocks


def build_prompt(query: str, docs: Sequence[ScoredDocument], template: PromptTemplate,
                 budget: int = DEFAULT_PROMPT_BUDGET, lang: str = "en") -> tuple[str, int]:
    """Render the prompt; returns (text, number of documents that made it in)."""
    if not docs:
        raise ValueError("no documents to build a prompt from")
    ordered = sorted(docs, key=lambda sd: sd.rank)
    bindings = {"query": query, "lang": lang}
    unbound = (set(re.findall(r"\{\{\s*(\w+)\s*\}\}", template.body)) - {"documents"}) - bindings.keys()
    if unbound:
        raise TemplateError(f"unbound placeholder(s): {', '.join(sorted(unbound))}")
    overhead = len(render(template.body, documents="", **bindings))
    sep = "\n\n"
    blocks = _fit_blocks([_doc_block(i, sd) for i, sd in enumerate(ordered, start=1)], budget - overhead, sep)
    if not blocks:
        raise TemplateError(f"prompt budget {budget} leaves no room for documents")
    return render(template.body, documents=sep.join(blocks), **bindings), len(blocks)


def assemble_prompt(query: str, docs: Sequence[ScoredDocument], template: PromptTemplate,
                    budget: int = DEFAULT_PROMPT_BUDGET, lang: str = "en") -> str:
    return build_prompt(query, docs, template, budget, lang)[0]


# --- output parsing --------------------------------------------------------


def parse_structured(raw: str, doc_ids: Sequence[str] = (), markers: dict | None = None) -> StructuredAnswer:
    """Split generator output on the marker lines; map ``[n]`` citations to ``doc_ids[n-1]``."""
    markers = markers or DEFAULT_MARKERS
    lines = raw.splitlines()
    lookup = {markers[key].strip().casefold(): key for key in SECTION_NAMES}
    starts: dict[str, int] = {}
    for i, line in enumerate(lines):
        key = lookup.get(line.strip().casefold())
        if key is not None and key not in starts:
            starts[key] = i
    for key, label in SECTION_NAMES.items():
        if key not in starts:
            raise AnswerParseError(label)
    bounds = sorted(starts.values()) + [len(lines)]
    sections = {}
    for key, label in SECTION_NAMES.items():
        begin = starts[key]
        end = bounds[bounds.index(begin) + 1]
        text = "\n".join(lines[begin + 1 : end]).strip()
        if not text:
            raise AnswerParseError(label, f"empty section: {label}")
        sections[key] = text

    cited: dict[str, None] = {}
    for m in _CITATION.finditer("\n".join(sections.values())):
        n = int(m.group(1))
        if 1 <= n <= len(doc_ids):
            cited.setdefault(doc_ids[n - 1])
    return StructuredAnswer(citations=tuple(cited), **sections)


# --- providers -------------------------------------------------------------


def first_sentence(text: str) -> str:
    text = " ".join(text.split())
    return _SENTENCE_END.split(text, maxsplit=1)[0] if text else ""


class TemplateGenerator:
    """Offline generator: echoes the query as title and stitches abstract leads into a cited body."""

    deterministic = True
    max_citations = 5

    def generate(self, prompt, context=None, seed=None):
        if context is None or not context.docs:
            raise GenerationError("template generator needs the documents in context")
        docs = sorted(context.docs, key=lambda sd: sd.rank)
        m = context.markers
        intro = first_sentence(docs[0].doc.abstract) or docs[0].doc.title or docs[0].doc.id
        body = []
        for n, sd in enumerate(docs[: self.max_citations], start=1):
            lead = first_sentence(sd.doc.abstract) or sd.doc.title or sd.doc.id
            body.append(f"{lead} [{n}]")
        title = " ".join(context.query.split())
        return f"{m['title']}\n{title}\n\n{m['introduction']}\n{intro}\n\n{m['main_body']}\n" + "\n".join(body) + "\n"


class HttpGenerator:
    """POST {"prompt", "max_tokens"} -> {"text"}; bearer key read from an environment variable."""

    deterministic = False

    def __init__(self, endpoint: str, max_tokens: int = 1024, timeout: float = 60.0,
                 api_key_env: str = "SHRAG_LLM_API_KEY", client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.max_tokens = max_tokens
        self.api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout)

    def generate(self, prompt, context=None, seed=None):
        key = os.environ.get(self.api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        payload = {"prompt": prompt, "max_tokens": self.max_tokens}
        if seed is not None:
            payload["seed"] = seed
        try:
            resp = self._client.post(self.endpoint, json=payload, headers=headers)
            resp.raise_for_status()
            text = resp.json()["text"]
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise GenerationError(f"generation request failed: {exc}") from exc
        if not isinstance(text, str):
            raise GenerationError("generation response 'text' is not a string")
        return text


def generate_answer(query: str, docs: Sequence[ScoredDocument], template: PromptTemplate, provider,
                    budget: int = DEFAULT_PROMPT_BUDGET, lang: str = "en", parse_retries: int = 1) -> StructuredAnswer:
    """Assemble, generate, parse. A parse failure is retried with a format reminder appended."""
    prompt, n_included = build_prompt(query, docs, template, budget, lang)
    included = tuple(sorted(docs, key=lambda sd: sd.rank)[:n_included])
    ids = [sd.doc.id for sd in included]
    context = GenerationContext(query, included, dict(template.markers))
    reminder = template.reminder or DEFAULT_REMINDER.format(headings=", ".join(template.markers[k] for k in SECTION_NAMES))
    attempt_prompt = prompt
    for attempt in range(parse_retries + 1):
        raw = provider.generate(attempt_prompt, context)
        try:
            return parse_structured(raw, ids, template.markers)
        except AnswerParseError:
            if attempt == parse_retries:
                raise
            log.info("answer did not parse, retrying with a format reminder")
            attempt_prompt = f"{prompt}\n\n{reminder}"
    raise AssertionError("unreachable")


# --- query decomposition ---------------------------------------------------


def _parse_subqueries(text: str) -> list[str]:
    m = re.search(r"\[.*\]", text, re.S)
    if m:
        try:
            items = json.loads(m.group(0))
            if isinstance(items, list) and all(isinstance(x, str) for x in items):
                return [x.strip() for x in items if x.strip()]
        except json.JSONDecodeError:
            pass
    out = []
    for line in text.splitlines():
        line = re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", line).strip()
        if line:
            out.append(line)
    return out


def decompose_query(query: str, provider=None, template: str = "decompose.txt") -> list[str]:
    """Split a multi-hop query into ordered sub-queries. Without a provider the query passes through."""
    if provider is None:
        return [query]
    try:
        raw = provider.generate(render(load_text(template), query=query))
        subs = _parse_subqueries(raw)
    except Exception as exc:
        log.warning("query decomposition failed, passing query through: %s", exc)
        return [query]
    if not subs:
        log.warning("query decomposition returned nothing, passing query through")
        return [query]
    return subs
