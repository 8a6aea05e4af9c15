"""Search backends: the embedded engine, or a remote HTTP engine speaking the same query syntax."""

from __future__ import annotations

from abc import ABC, abstractmethod

import httpx

from .documents import Document
from .engine import InvertedIndex, parse_query, search_topk


class BackendError(RuntimeError):
    def __init__(self, message: str, query: str, retriable: bool = True):
        super().__init__(f"{message} (query={query!r})")
        self.query = query
        self.retriable = retriable


class SearchBackend(ABC):
    retriable = False

    @abstractmethod
    def search(self, serialized_query: str, topk: int) -> list[Document]:
        ...


class LocalBackend(SearchBackend):
    def __init__(self, index: InvertedIndex):
        self.index = index

    def search(self, serialized_query, topk):
        hits = search_topk(parse_query(serialized_query), self.index, topk)
        return [h.doc for h in hits]


class RemoteBackend(SearchBackend):
    """GET {base_url}?q=<query>&topk=<n> returning a JSON array of corpus-format objects.

    A single attempt per call; retry policy lives with the caller.
    """

    retriable = True

    def __init__(self, base_url: str, timeout: float = 10.0, client: httpx.Client | None = None):
        self.base_url = base_url
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    def search(self, serialized_query, topk):
        try:
            resp = self._client.get(self.base_url, params={"q": serialized_query, "topk": topk}, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise BackendError(f"request failed: {exc}", serialized_query) from exc
        if resp.status_code >= 500:
            raise BackendError(f"HTTP {resp.status_code}", serialized_query)
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}", serialized_query, retriable=False)
        try:
            payload = resp.json()
        except ValueError as exc:
            raise BackendError("response is not JSON", serialized_query, retriable=False) from exc
        if not isinstance(payload, list):
            raise BackendError("response is not a JSON array", serialized_query, retriable=False)
        try:
            docs = [Document.from_record(rec, source="remote") for rec in payload]
        except (TypeError, ValueError) as exc:
            raise BackendError(f"bad document in response: {exc}", serialized_query, retriable=False) from exc
        return docs[:topk]
