"""Embedded Boolean retrieval engine.

Query syntax (no whitespace, no parentheses)::

    free|textbook+mathematics+school   ->  free OR (textbook AND mathematics AND school)
    -term                              ->  NOT term

``+`` binds tighter than ``|``. Matching documents are ranked with BM25
(k1=1.2, b=0.75) over the positive terms of the query.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Union

from .documents import Corpus, Document
from .io import atomic_write_text

BM25_K1 = 1.2
BM25_B = 0.75

_HANGUL = "\u1100-\u11ff\u3130-\u318f\ua960-\ua97f\uac00-\ud7a3\ud7b0-\ud7ff"
_WORD_RUN = re.compile(r"[^\W_]+")
_SCRIPT_SPLIT = re.compile(rf"[{_HANGUL}]+|[^{_HANGUL}]+")
_HANGUL_RUN = re.compile(rf"^[{_HANGUL}]+$")


def tokenize(text: str, lang: str | None = None) -> list[str]:
    """Lowercase and split on whitespace/punctuation; Hangul runs are split from adjacent non-Hangul.

    ``lang`` is accepted for interface symmetry; segmentation is script-driven so
    mixed-language text ("찰스 다윈(Charles Darwin)") tokenizes the same under any tag.
    """
    if not text:
        return []
    tokens = []
    for run in _WORD_RUN.findall(text.lower()):
        tokens.extend(_SCRIPT_SPLIT.findall(run))
    return tokens


def is_hangul(token: str) -> bool:
    return bool(_HANGUL_RUN.match(token))


# --- query AST -------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    token: str

    def __post_init__(self):
        if not self.token or any(c.isspace() for c in self.token):
            raise ValueError(f"invalid term token: {self.token!r}")
        if self.token != self.token.lower():
            raise ValueError(f"term token must be lowercase: {self.token!r}")


@dataclass(frozen=True)
class And:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("And needs at least 2 children")


@dataclass(frozen=True)
class Or:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("Or needs at least 2 children")


@dataclass(frozen=True)
class Not:
    child: "QueryAst"


QueryAst = Union[Term, And, Or, Not]


def iter_terms(ast: QueryAst, positive: bool = True) -> Iterator[tuple[str, bool]]:
    """Yield (token, polarity) for every term; polarity flips under each Not."""
    if isinstance(ast, Term):
        yield ast.token, positive
    elif isinstance(ast, Not):
        yield from iter_terms(ast.child, not positive)
    else:
        for child in ast.children:
            yield from iter_terms(child, positive)


def positive_terms(ast: QueryAst) -> list[str]:
    """Distinct positive terms in first-appearance order."""
    out: dict[str, None] = {}
    for token, pos in iter_terms(ast):
        if pos:
            out.setdefault(token)
    return list(out)


# --- parser ----------------------------------------------------------------


class QueryParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


def _byte_offset(s: str, i: int) -> int:
    return len(s[:i].encode("utf-8"))


def parse_query(serialized: str) -> QueryAst:
    """Parse the wire syntax into an AST. Terms are lowercased."""
    s = serialized
    if not s:
        raise QueryParseError("empty query", 0)
    disjuncts = []
    conjuncts = []
    i = 0
    n = len(s)
    while True:
        # literal := '-'? term
        negate = False
        if i < n and s[i] == "-":
            negate = True
            i += 1
        start = i
        if i < n and s[i] == "-":
            raise QueryParseError("empty term before '-'", _byte_offset(s, i))
        while i < n and s[i] not in "|+" and not s[i].isspace():
            i += 1
        if i == start:
            if i >= n:
                raise QueryParseError("dangling operator", _byte_offset(s, i - 1))
            raise QueryParseError(f"empty term before {s[i]!r}", _byte_offset(s, i))
        lit: QueryAst = Term(s[start:i].lower())
        if negate:
            lit = Not(lit)
        conjuncts.append(lit)
        if i >= n:
            break
        op = s[i]
        if op.isspace():
            raise QueryParseError("whitespace is not allowed", _byte_offset(s, i))
        i += 1
        if i >= n:
            raise QueryParseError(f"dangling operator {op!r}", _byte_offset(s, i - 1))
        if op == "|":
            disjuncts.append(conjuncts[0] if len(conjuncts) == 1 else And(tuple(conjuncts)))
            conjuncts = []
    disjuncts.append(conjuncts[0] if len(conjuncts) == 1 else And(tuple(conjuncts)))
    return disjuncts[0] if len(disjuncts) == 1 else Or(tuple(disjuncts))


# --- inverted index --------------------------------------------------------


@dataclass(frozen=True)
class ScoredDocument:
    doc: Document
    score: float
    rank: int


def document_text(doc: Document) -> str:
    return f"{doc.title} {doc.abstract} {doc.body}"


class InvertedIndex:
    """Token -> postings over a Corpus, plus the length statistics BM25 needs. Immutable after build."""

    def __init__(self, corpus: Corpus, postings: dict[str, list[tuple[int, int]]], doc_lengths: list[int]):
        self.corpus = corpus
        self.postings = postings
        self.doc_lengths = doc_lengths
        self.doc_count = len(doc_lengths)
        self.avg_doc_length = sum(doc_lengths) / self.doc_count if self.doc_count else 0.0
        self._sets = {tok: frozenset(p for p, _ in plist) for tok, plist in postings.items()}
        self._tf = {tok: dict(plist) for tok, plist in postings.items()}
        self._all = frozenset(range(self.doc_count))

    def docs_with(self, token: str) -> frozenset[int]:
        return self._sets.get(token, frozenset())

    def tf(self, token: str, pos: int) -> int:
        return self._tf.get(token, {}).get(pos, 0)

    def df(self, token: str) -> int:
        return len(self.postings.get(token, ()))

    @property
    def all_positions(self) -> frozenset[int]:
        return self._all

    def to_dict(self) -> dict:
        return {
            "format": "shrag-index",
            "version": 1,
            "documents": [d.to_record() for d in self.corpus],
            "doc_lengths": self.doc_lengths,
            "postings": {tok: [list(p) for p in plist] for tok, plist in sorted(self.postings.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InvertedIndex":
        if data.get("format") != "shrag-index":
            raise ValueError("not a shrag index file")
        corpus = Corpus(Document(**rec) for rec in data["documents"])
        postings = {tok: [(p, tf) for p, tf in plist] for tok, plist in data["postings"].items()}
        return cls(corpus, postings, list(data["doc_lengths"]))

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_index(corpus: Corpus) -> InvertedIndex:
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    postings: dict[str, list[tuple[int, int]]] = {}
    lengths = []
    for pos, doc in enumerate(corpus):
        tokens = tokenize(document_text(doc), doc.lang)
        lengths.append(len(tokens))
        for tok, count in Counter(tokens).items():
            postings.setdefault(tok, []).append((pos, count))
    return InvertedIndex(corpus, postings, lengths)


def evaluate_boolean(ast: QueryAst, index: InvertedIndex) -> set[int]:
    if isinstance(ast, Term):
        return set(index.docs_with(ast.token))
    if isinstance(ast, Not):
        return set(index.all_positions - evaluate_boolean(ast.child, index))
    if isinstance(ast, And):
        # smallest operand first keeps intermediate sets small
        parts = sorted((evaluate_boolean(c, index) for c in ast.children), key=len)
        return set.intersection(*parts)
    if isinstance(ast, Or):
        return set().union(*(evaluate_boolean(c, index) for c in ast.children))
    raise TypeError(f"not a query AST node: {ast!r}")


def bm25_idf(df: int, n_docs: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def bm25_score(tokens: list[str], pos: int, index: InvertedIndex, k1: float = BM25_K1, b: float = BM25_B) -> float:
    dl = index.doc_lengths[pos]
    norm = k1 * (1.0 - b + b * dl / index.avg_doc_length) if index.avg_doc_length else k1
    score = 0.0
    for tok in tokens:
        f = index.tf(tok, pos)
        if f:
            score += bm25_idf(index.df(tok), index.doc_count) * f * (k1 + 1.0) / (f + norm)
    return score


def search_topk(ast: QueryAst, index: InvertedIndex, k: int) -> list[ScoredDocument]:
    if k < 1:
        raise ValueError("k must be >= 1")
    matched = evaluate_boolean(ast, index)
    tokens = positive_terms(ast)
    scored = [(bm25_score(tokens, pos, index), index.corpus[pos]) for pos in matched]
    scored.sort(key=lambda sd: (-sd[0], sd[1].id))
    return [ScoredDocument(doc, score, rank) for rank, (score, doc) in enumerate(scored[:k], start=1)]
