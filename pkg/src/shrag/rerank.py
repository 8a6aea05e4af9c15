"""Embedding providers and cosine re-ranking of retrieved documents."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import httpx
import numpy as np

from .documents import Document
from .engine import ScoredDocument, tokenize

DEFAULT_TOKEN_BUDGET = 512


class EmbeddingError(RuntimeError):
    pass


class RerankError(RuntimeError):
    def __init__(self, message: str, doc_id: str | None = None):
        super().__init__(message if doc_id is None else f"{message} (doc {doc_id})")
        self.doc_id = doc_id


def as_vector(values, dim: int | None = None) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise EmbeddingError("embedding must be a non-empty 1-d vector")
    if dim is not None and vec.size != dim:
        raise EmbeddingError(f"embedding has dim {vec.size}, expected {dim}")
    if not np.any(vec):
        raise EmbeddingError("all-zero embedding")
    return vec


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class EmbeddingProvider:
    deterministic = False

    def dim(self) -> int:
        raise NotImplementedError

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class HashingProvider(EmbeddingProvider):
    """Seeded token-hashing bag of words, L2-normalized. A stand-in for a real multilingual model."""

    deterministic = True

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self._dim = dim
        self.seed = seed
        self._key = seed.to_bytes(8, "little", signed=True)

    def dim(self):
        return self._dim

    def _bucket(self, token: str) -> int:
        h = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key)
        return int.from_bytes(h.digest(), "little") % self._dim

    def embed(self, text):
        tokens = tokenize(text)
        if not tokens:
            raise EmbeddingError("empty text")
        vec = np.zeros(self._dim)
        for tok in tokens:
            vec[self._bucket(tok)] += 1.0
        return vec / np.linalg.norm(vec)


class RemoteEmbeddingProvider(EmbeddingProvider):
    """POST {"texts": [...]} -> {"vectors": [[...]], "dim": n}."""

    def __init__(self, endpoint: str, timeout: float = 30.0, batch_size: int = 32,
                 api_key_env: str = "SHRAG_EMBED_API_KEY", client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.batch_size = batch_size
        self.api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout)
        self._dim: int | None = None

    def dim(self):
        if self._dim is None:
            self.embed("dimension probe")
        return self._dim

    def _headers(self):
        key = os.environ.get(self.api_key_env)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _post(self, texts):
        try:
            resp = self._client.post(self.endpoint, json={"texts": list(texts)}, headers=self._headers())
            resp.raise_for_status()
            data = resp.json()
            vectors = data["vectors"]
            dim = int(data.get("dim", len(vectors[0]) if vectors else 0))
        except (httpx.HTTPError, ValueError, KeyError, TypeError, IndexError) as exc:
            raise EmbeddingError(f"embedding request failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingError(f"expected {len(texts)} vectors, got {len(vectors)}")
        if self._dim is None:
            self._dim = dim
        return [as_vector(v, self._dim) for v in vectors]

    def embed(self, text):
        return self._post([text])[0]

    def embed_many(self, texts):
        out = []
        for i in range(0, len(texts), self.batch_size):
            out.extend(self._post(texts[i : i + self.batch_size]))
        return out


def embedding_text(doc: Document, token_budget: int = DEFAULT_TOKEN_BUDGET) -> str:
    """Title plus abstract, cut to ``token_budget`` whitespace tokens."""
    words = f"{doc.title} {doc.abstract}".split()
    return " ".join(words[:token_budget])


def rerank_topk(query: str, docs: Sequence[Document], k: int, provider: EmbeddingProvider,
                token_budget: int = DEFAULT_TOKEN_BUDGET, workers: int = 1) -> list[ScoredDocument]:
    """Score each document by cosine to the query embedding; keep the best ``k`` (ties by id)."""
    if not docs:
        raise RerankError("empty document set")
    if k < 1:
        raise ValueError("k must be >= 1")
    try:
        q_vec = as_vector(provider.embed(query))
    except Exception as exc:
        raise RerankError(f"query embedding failed: {exc}") from exc

    texts = [embedding_text(d, token_budget) for d in docs]
    distinct = list(dict.fromkeys(texts))
    owner = {}
    for d, t in zip(docs, texts):
        owner.setdefault(t, d.id)

    def embed_one(text):
        try:
            return as_vector(provider.embed(text))
        except Exception as exc:
            raise RerankError(f"embedding failed: {exc}", owner[text]) from exc

    if isinstance(provider, RemoteEmbeddingProvider):
        try:
            vectors = provider.embed_many(distinct)
        except Exception as exc:
            raise RerankError(f"batch embedding failed: {exc}", owner[distinct[0]]) from exc
    elif workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(embed_one, distinct))
    else:
        vectors = [embed_one(t) for t in distinct]
    cache = dict(zip(distinct, vectors))

    scored = []
    for d, t in zip(docs, texts):
        try:
            scored.append((cosine(q_vec, cache[t]), d))
        except ValueError as exc:
            raise RerankError(str(exc), d.id) from exc
    scored.sort(key=lambda sd: (-sd[0], sd[1].id))
    return [ScoredDocument(d, s, rank) for rank, (s, d) in enumerate(scored[:k], start=1)]
