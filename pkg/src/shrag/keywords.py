"""Bilingual keyword extraction, compound splitting and importance ranking."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Protocol

from .engine import InvertedIndex, is_hangul, tokenize
from .prompts import load_text, render

log = logging.getLogger(__name__)

MAX_KEYWORDS = 10

# Function words carry no topic; unseen in the corpus they would otherwise get the top idf.
EN_STOPWORDS = frozenset("""
a about after all also an and any are as at be been but by can could did do does for from had has have how
i if in into is it its may might more most not of on or our should so such than that the their them then
there these they this those to was we were what when where which while who whom why will with would you your
""".split())


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Keyword:
    surface: str
    lang: str
    importance: float = 1.0

    def __post_init__(self):
        if not self.surface:
            raise ValueError("keyword surface must be non-empty")
        if self.importance < 0 or math.isnan(self.importance):
            raise ValueError(f"importance must be >= 0, got {self.importance}")


@dataclass(frozen=True)
class KeywordSet:
    keywords: tuple[Keyword, ...]

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if len(self.keywords) > MAX_KEYWORDS:
            raise ValueError(f"at most {MAX_KEYWORDS} keywords")
        folded = [k.surface.casefold() for k in self.keywords]
        if len(set(folded)) != len(folded):
            raise ValueError("duplicate keyword surfaces")

    def __len__(self):
        return len(self.keywords)

    def __iter__(self):
        return iter(self.keywords)

    def __getitem__(self, i):
        return self.keywords[i]

    @property
    def surfaces(self) -> list[str]:
        return [k.surface for k in self.keywords]

    def to_list(self) -> list[dict]:
        return [{"surface": k.surface, "lang": k.lang, "importance": k.importance} for k in self.keywords]


class ExtractorProvider(Protocol):
    def extract(self, query: str, lang: str, k: int, seed: int | None = None) -> list[Keyword]:
        ...


def _script_matches(token: str, lang: str) -> bool:
    return is_hangul(token) if lang == "ko" else not is_hangul(token)


class StatisticalProvider:
    """TF-IDF keyword scorer against an indexed corpus. Offline and deterministic.

    A query token's score is its count in the query times ``ln((N+1)/(df+1)) + 1``.
    For ``lang="ko"`` only Hangul tokens are considered, for any other tag only
    non-Hangul tokens, so the two bilingual calls split a mixed query by script.
    Stopwords are skipped.
    """

    deterministic = True

    def __init__(self, index: InvertedIndex, stopwords: Iterable[str] = EN_STOPWORDS):
        self.index = index
        self.stopwords = frozenset(stopwords)

    def idf(self, token: str) -> float:
        return math.log((self.index.doc_count + 1) / (self.index.df(token) + 1)) + 1.0

    def scores(self, query: str, lang: str) -> list[tuple[str, float]]:
        tokens = [t for t in tokenize(query, lang) if _script_matches(t, lang) and t not in self.stopwords]
        counts = Counter(tokens)
        order = {t: i for i, t in reversed(list(enumerate(tokens)))}
        scored = [(t, counts[t] * self.idf(t)) for t in counts]
        scored.sort(key=lambda ts: (-ts[1], order[ts[0]]))
        return scored

    def extract(self, query, lang, k, seed=None):
        return [Keyword(t, lang, s) for t, s in self.scores(query, lang)[:k]]


_JSON_ARRAY = re.compile(r"\[.*\]", re.S)


def parse_keyword_response(text: str, lang: str, k: int) -> list[Keyword]:
    """Parse a ``[{"keyword": ..., "importance": ...}, ...]`` reply, tolerating surrounding prose or fences."""
    m = _JSON_ARRAY.search(text)
    if not m:
        raise ExtractionError("no JSON array in provider response")
    try:
        items = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        raise ExtractionError(f"invalid JSON in provider response: {exc.msg}") from exc
    out = []
    for item in items:
        if isinstance(item, str):
            word, imp = item, None
        elif isinstance(item, dict) and isinstance(item.get("keyword"), str):
            word, imp = item["keyword"], item.get("importance")
        else:
            raise ExtractionError(f"unexpected item in provider response: {item!r}")
        word = word.strip()
        if not word:
            continue
        # without explicit scores, list position is the importance order
        if not isinstance(imp, (int, float)) or imp < 0:
            imp = float(len(items) - len(out))
        out.append(Keyword(word, lang, float(imp)))
    return out[:k]


class LLMExtractor:
    """Keyword extraction through a generation provider, one language-matched prompt per call."""

    deterministic = False

    def __init__(self, generator, templates: dict[str, str] | None = None):
        self.generator = generator
        self.templates = templates or {}

    def prompt(self, query: str, lang: str, k: int) -> str:
        name = self.templates.get(lang, f"keywords_{lang}.txt")
        try:
            text = load_text(name)
        except FileNotFoundError:
            text = load_text("keywords_en.txt")
        return render(text, query=query, k=k)

    def extract(self, query, lang, k, seed=None):
        try:
            raw = self.generator.generate(self.prompt(query, lang, k), seed=seed)
        except Exception as exc:
            raise ExtractionError(f"keyword provider failed ({lang}): {exc}") from exc
        return parse_keyword_response(raw, lang, k)


def normalize_importance(keywords: list[Keyword]) -> list[Keyword]:
    """Min-max scale importances into [0, 1]; a constant list maps to 1.0."""
    if not keywords:
        return []
    lo = min(k.importance for k in keywords)
    hi = max(k.importance for k in keywords)
    if hi == lo:
        return [replace(k, importance=1.0) for k in keywords]
    return [replace(k, importance=(k.importance - lo) / (hi - lo)) for k in keywords]


def extract_bilingual(query: str, k: int, provider, target_lang: str = "ko", fallback=None, seed: int | None = None):
    """Two independent provider calls (English, then the target language).

    Returns ``(en_keywords, target_keywords)`` with importances normalized per call.
    If ``provider`` raises and a ``fallback`` provider is given, both calls are redone with it.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not query.strip():
        raise ValueError("empty query")
    try:
        en = provider.extract(query, "en", k, seed=seed)
        other = provider.extract(query, target_lang, k, seed=seed)
    except Exception as exc:
        if fallback is None:
            if isinstance(exc, ExtractionError):
                raise
            raise ExtractionError(str(exc)) from exc
        log.warning("keyword provider failed, using fallback: %s", exc)
        en = fallback.extract(query, "en", k)
        other = fallback.extract(query, target_lang, k)
    return normalize_importance(en[:k]), normalize_importance(other[:k])


def split_compounds(keywords: Iterable[Keyword]) -> list[Keyword]:
    out = []
    for kw in keywords:
        parts = kw.surface.split()
        if len(parts) == 1 and parts[0] == kw.surface:
            out.append(kw)
        else:
            out.extend(replace(kw, surface=p) for p in parts)
    return out


def to_index_terms(keywords: Iterable[Keyword]) -> list[Keyword]:
    """Re-split surfaces with the engine tokenizer so every keyword is a single index token.

    Provider output such as "COVID-19" or "다윈(Darwin)" becomes ["covid", "19"] and
    ["다윈", "darwin"]; pieces inherit the parent's language and importance.
    """
    out = []
    for kw in keywords:
        out.extend(replace(kw, surface=tok) for tok in tokenize(kw.surface, kw.lang))
    return out


def rank_and_truncate(keywords: Iterable[Keyword], limit: int = MAX_KEYWORDS) -> KeywordSet:
    """Case-folded dedup (max importance wins), stable sort by importance, cut to ``limit``."""
    best: dict[str, Keyword] = {}
    first_seen: dict[str, int] = {}
    for i, kw in enumerate(keywords):
        key = kw.surface.casefold()
        first_seen.setdefault(key, i)
        if key not in best or kw.importance > best[key].importance:
            best[key] = replace(kw, surface=key)
    if not best:
        raise ExtractionError("no keywords extracted")
    ranked = sorted(best.values(), key=lambda kw: (-kw.importance, first_seen[kw.surface], kw.surface))
    return KeywordSet(tuple(ranked[: min(limit, MAX_KEYWORDS)]))


def extract_keywords(query: str, provider, k: int = MAX_KEYWORDS, target_lang: str = "ko", fallback=None,
                     seed: int | None = None) -> KeywordSet:
    """Full keyword step: bilingual extraction, compound split, engine-token split, joint ranking."""
    en, other = extract_bilingual(query, k, provider, target_lang=target_lang, fallback=fallback, seed=seed)
    words = to_index_terms(split_compounds(en + other))
    return rank_and_truncate(words, limit=k)
