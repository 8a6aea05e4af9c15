"""End-to-end orchestration: keywords -> OR ladder -> retrieval/dedup -> re-rank -> structured answer."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backends import BackendError, LocalBackend, RemoteBackend, SearchBackend
from .config import PipelineConfig
from .documents import Document, dedup, ingest, is_complete
from .engine import InvertedIndex, ScoredDocument, build_index, is_hangul, tokenize
from .generation import (
    HttpGenerator,
    StructuredAnswer,
    TemplateGenerator,
    decompose_query,
    generate_answer,
)
from .keywords import KeywordSet, LLMExtractor, StatisticalProvider, extract_keywords
from .prompts import PromptTemplate, load_answer_template
from .query_builder import LadderLevel, QueryLadder, generate_or_ladder
from .rerank import HashingProvider, RemoteEmbeddingProvider, rerank_topk

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGES = ("decompose", "extract", "query", "retrieve", "rerank", "generate")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, trace: "PipelineTrace | None" = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.trace = trace


class PartialCollectionError(RuntimeError):
    def __init__(self, failed_levels: list[int], documents: list[Document]):
        super().__init__(f"retrieval failed for ladder level(s) {failed_levels}")
        self.failed_levels = failed_levels
        self.documents = documents


@dataclass(frozen=True)
class QueryRecord:
    id: str
    text: str
    lang: str = "en"

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("empty query")


def detect_lang(text: str) -> str:
    tokens = tokenize(text)
    hangul = sum(1 for t in tokens if is_hangul(t))
    return "ko" if hangul and hangul * 2 >= len(tokens) else "en"


@dataclass
class RetrievalTrace:
    sub_query: str
    keyword_set: KeywordSet | None = None
    ladder: QueryLadder | None = None
    per_query_hits: list[tuple[int, list[str]]] = field(default_factory=list)
    failed_levels: list[int] = field(default_factory=list)
    collected: list[str] = field(default_factory=list)
    top: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sub_query": self.sub_query,
            "keyword_set": self.keyword_set.to_list() if self.keyword_set else None,
            "ladder": [{"n": lv.n, "query": lv.serialized} for lv in self.ladder] if self.ladder else None,
            "per_query_hits": [{"n": n, "ids": ids} for n, ids in self.per_query_hits],
            "failed_levels": self.failed_levels,
            "collected": self.collected,
            "top": [{"id": i, "score": s} for i, s in self.top],
        }


@dataclass
class PipelineTrace:
    query: QueryRecord
    sub_queries: list[str] = field(default_factory=list)
    retrievals: list[RetrievalTrace] = field(default_factory=list)
    top5: list[tuple[str, float]] = field(default_factory=list)
    answer: StructuredAnswer | None = None
    timings: dict[str, float] = field(default_factory=dict)
    record_timings: bool = True

    @property
    def collected(self) -> list[str]:
        return list(dict.fromkeys(i for r in self.retrievals for i in r.collected))

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "query": {"id": self.query.id, "text": self.query.text, "lang": self.query.lang},
            "sub_queries": self.sub_queries,
            "retrievals": [r.to_dict() for r in self.retrievals],
            "top5": [{"id": i, "score": s} for i, s in self.top5],
            "answer": self.answer.to_dict() if self.answer else None,
        }
        if self.record_timings:
            out["timings_ms"] = {k: round(v, 3) for k, v in self.timings.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"


@dataclass
class Components:
    backend: SearchBackend
    extractor: object
    embedder: object
    generator: object
    fallback_extractor: object | None = None
    decomposer: object | None = None
    index: InvertedIndex | None = None
    retries: int = 0


def load_index(config: PipelineConfig) -> InvertedIndex | None:
    if config.index and Path(config.index).is_file():
        return InvertedIndex.load(config.index)
    if config.corpus:
        corpus, _ = ingest(config.corpus)
        return build_index(corpus)
    if config.index:
        raise FileNotFoundError(config.index)
    return None


def build_components(config: PipelineConfig, index: InvertedIndex | None = None) -> Components:
    if index is None:
        index = load_index(config)
    if config.backend.kind == "local":
        if index is None:
            raise ValueError("local backend needs an index or corpus")
        backend: SearchBackend = LocalBackend(index)
        retries = 0
    else:
        backend = RemoteBackend(config.backend.url, timeout=config.backend.timeout)
        retries = config.backend.retries

    statistical = StatisticalProvider(index) if index is not None else None
    if config.extractor.kind == "statistical":
        if statistical is None:
            raise ValueError("statistical extractor needs an index or corpus")
        extractor, fallback = statistical, None
    else:
        templates = {"en": config.extractor.template_en}
        if config.extractor.template_target:
            templates[config.target_lang] = config.extractor.template_target
        extractor = LLMExtractor(HttpGenerator(config.extractor.endpoint, timeout=config.timeout), templates)
        fallback = statistical if config.extractor.fallback else None

    if config.embedder.kind == "hashing":
        embedder = HashingProvider(config.embedder.dim, config.embed_seed)
    else:
        embedder = RemoteEmbeddingProvider(config.embedder.endpoint, timeout=config.timeout,
                                           batch_size=config.embedder.batch_size)

    if config.generator.kind == "template":
        generator = TemplateGenerator()
    else:
        generator = HttpGenerator(config.generator.endpoint, max_tokens=config.generator.max_tokens,
                                  timeout=config.timeout)

    decomposer = HttpGenerator(config.decomposer.endpoint, timeout=config.timeout) if config.decomposer.kind == "llm" else None
    return Components(backend, extractor, embedder, generator, fallback, decomposer, index, retries)


def _search_with_retry(backend: SearchBackend, query: str, topk: int, retries: int) -> list[Document]:
    attempt = 0
    while True:
        try:
            return backend.search(query, topk)
        except BackendError as exc:
            if not exc.retriable or attempt >= retries:
                raise
            attempt += 1
            log.warning("retrying %r after backend error (%d/%d): %s", query, attempt, retries, exc)


def collect_documents(ladder: Sequence[LadderLevel], backend: SearchBackend, per_query_topk: int = 10,
                      workers: int = 1, retries: int = 0, allow_partial: bool = True):
    """Run every ladder level, drop incomplete documents, dedup first-seen in ladder order.

    Returns ``(documents, per_query_hits, failed_levels)``. Levels may run concurrently;
    merging always follows ladder order.
    """
    levels = list(ladder)
    if not levels:
        raise ValueError("empty ladder")
    if per_query_topk < 1:
        raise ValueError("per_query_topk must be >= 1")

    def run_level(level):
        try:
            return _search_with_retry(backend, level.serialized, per_query_topk, retries), None
        except BackendError as exc:
            return None, exc

    if workers > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(levels))) as pool:
            results = list(pool.map(run_level, levels))
    else:
        results = [run_level(lv) for lv in levels]

    hits, failed, pooled = [], [], []
    for level, (docs, err) in zip(levels, results):
        if err is not None:
            log.warning("ladder level %d failed: %s", level.n, err)
            failed.append(level.n)
            continue
        docs = docs[:per_query_topk]
        hits.append((level.n, [d.id for d in docs]))
        pooled.extend(d for d in docs if is_complete(d))
    collected = dedup(pooled)
    if failed and (not allow_partial or len(failed) == len(levels)):
        raise PartialCollectionError(failed, collected)
    return collected, hits, failed


@contextmanager
def _timed(timings: dict, stage: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - t0) * 1000.0


def retrieve(sub_query: str, config: PipelineConfig, comps: Components, rt: RetrievalTrace, timings: dict):
    """Steps 1-3 for one (sub-)query; fills ``rt`` as it goes and returns the collected documents."""
    stage = "extract"
    try:
        with _timed(timings, "extract"):
            rt.keyword_set = extract_keywords(sub_query, comps.extractor, k=config.keyword_k,
                                              target_lang=config.target_lang, fallback=comps.fallback_extractor)
        stage = "query"
        with _timed(timings, "query"):
            rt.ladder = generate_or_ladder(rt.keyword_set)
        stage = "retrieve"
        with _timed(timings, "retrieve"):
            try:
                docs, hits, failed = collect_documents(rt.ladder, comps.backend, config.per_query_topk,
                                                       config.workers, comps.retries, config.allow_partial)
            except PartialCollectionError as exc:
                rt.failed_levels = exc.failed_levels
                rt.collected = [d.id for d in exc.documents]
                raise
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc
    rt.per_query_hits, rt.failed_levels, rt.collected = hits, failed, [d.id for d in docs]
    return docs


def answer_template(config: PipelineConfig, lang: str) -> PromptTemplate:
    if config.generator.template:
        return load_answer_template(path=config.generator.template)
    try:
        return load_answer_template(lang)
    except FileNotFoundError:
        return load_answer_template("en")


def run(query: QueryRecord, config: PipelineConfig, components: Components | None = None):
    """Execute the five steps. Returns ``(answer, trace)``; failures raise PipelineError with the partial trace."""
    comps = components or build_components(config)
    trace = PipelineTrace(query=query, record_timings=config.record_timings)
    timings = {s: 0.0 for s in STAGES}
    trace.timings = timings
    try:
        with _timed(timings, "decompose"):
            if config.decomposer.kind == "off":
                trace.sub_queries = [query.text]
            else:
                trace.sub_queries = decompose_query(query.text, comps.decomposer)

        fused: list[ScoredDocument] = []
        seen: set[str] = set()
        for sub in trace.sub_queries:
            rt = RetrievalTrace(sub_query=sub)
            trace.retrievals.append(rt)
            docs = retrieve(sub, config, comps, rt, timings)
            with _timed(timings, "rerank"):
                if not docs:
                    raise PipelineError("rerank", "empty document set")
                try:
                    top = rerank_topk(sub, docs, config.rerank_k, comps.embedder,
                                      token_budget=config.embedder.token_budget, workers=config.workers)
                except Exception as exc:
                    raise PipelineError("rerank", str(exc)) from exc
            rt.top = [(sd.doc.id, sd.score) for sd in top]
            for sd in top:
                if sd.doc.id not in seen:
                    seen.add(sd.doc.id)
                    fused.append(ScoredDocument(sd.doc, sd.score, len(fused) + 1))
        trace.top5 = [(sd.doc.id, sd.score) for sd in fused]

        with _timed(timings, "generate"):
            try:
                template = answer_template(config, query.lang)
                trace.answer = generate_answer(query.text, fused, template, comps.generator,
                                               budget=config.prompt_budget, lang=query.lang,
                                               parse_retries=config.parse_retries)
            except Exception as exc:
                raise PipelineError("generate", str(exc)) from exc
    except PipelineError as exc:
        exc.trace = trace
        raise
    return trace.answer, trace
