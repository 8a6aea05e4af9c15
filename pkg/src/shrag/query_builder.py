"""OR-ladder and AND-variant query generation, and serialization to the engine's wire syntax."""

from __future__ import annotations

from dataclasses import dataclass

from .engine import And, Not, Or, QueryAst, Term
from .keywords import KeywordSet

_FORBIDDEN = set("|+")


class SerializationError(ValueError):
    pass


@dataclass(frozen=True)
class SearchQuery:
    ast: QueryAst
    serialized: str


@dataclass(frozen=True)
class LadderLevel:
    n: int
    ast: QueryAst
    serialized: str


@dataclass(frozen=True)
class QueryLadder:
    queries: tuple[LadderLevel, ...]

    def __len__(self):
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)


def _surfaces(keywords) -> list[str]:
    if isinstance(keywords, KeywordSet):
        return [k.surface for k in keywords]
    return [k if isinstance(k, str) else k.surface for k in keywords]


def _or(nodes: list[QueryAst]) -> QueryAst:
    return nodes[0] if len(nodes) == 1 else Or(tuple(nodes))


def generate_or_ladder(keywords) -> QueryLadder:
    """Disjunctions over the first n keywords for n = |K| down to 1."""
    words = _surfaces(keywords)
    if not words:
        raise ValueError("empty keyword set")
    terms = [Term(w) for w in words]
    levels = []
    for n in range(len(terms), 0, -1):
        ast = _or(terms[:n])
        levels.append(LadderLevel(n, ast, serialize(ast)))
    return QueryLadder(tuple(levels))


def generate_and_variant(keywords, and_count: int) -> SearchQuery:
    """Join the lowest-ranked ``and_count + 1`` keywords with AND, the rest with OR.

    >>> generate_and_variant(["free", "textbook", "mathematics", "school"], 2).serialized
    'free|textbook+mathematics+school'
    """
    words = _surfaces(keywords)
    m = len(words)
    if m == 0:
        raise ValueError("empty keyword set")
    if not 0 <= and_count <= m - 1:
        raise ValueError(f"and_count must be in [0, {m - 1}], got {and_count}")
    terms = [Term(w) for w in words]
    split = m - (and_count + 1)
    tail = terms[split:]
    conj = tail[0] if len(tail) == 1 else And(tuple(tail))
    ast = _or(terms[:split] + [conj])
    return SearchQuery(ast, serialize(ast))


def _literal(node: QueryAst) -> str:
    if isinstance(node, Not):
        if not isinstance(node.child, Term):
            raise SerializationError("NOT can only wrap a single term")
        return "-" + _term(node.child)
    if isinstance(node, Term):
        return _term(node)
    raise SerializationError(f"cannot serialize nested {type(node).__name__} without parentheses")


def _term(node: Term) -> str:
    tok = node.token
    if any(c in _FORBIDDEN or c.isspace() for c in tok):
        raise SerializationError(f"term {tok!r} contains an operator or whitespace")
    if tok.startswith("-"):
        raise SerializationError(f"term {tok!r} would read as NOT")
    return tok


def _conjunct(node: QueryAst) -> str:
    if isinstance(node, And):
        return "+".join(_literal(c) for c in node.children)
    return _literal(node)


def serialize(ast: QueryAst) -> str:
    """Render an AST as ``a|b+c`` syntax. Only flat OR-of-ANDs-of-literals shapes are expressible."""
    if isinstance(ast, Or):
        return "|".join(_conjunct(c) for c in ast.children)
    return _conjunct(ast)
