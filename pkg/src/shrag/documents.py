"""Document model, JSON-lines corpus ingestion and the completeness/dedup rules."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

REQUIRED_KEYS = ("id", "title", "abstract", "body", "lang")


@dataclass(frozen=True)
class Document:
    id: str
    title: str = ""
    abstract: str = ""
    body: str = ""
    lang: str = "en"
    source: str = "local"

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("document id must be a non-empty string")

    @classmethod
    def from_record(cls, record: dict, source: str = "local") -> "Document":
        """Build a document from a corpus-format object. Unknown keys are ignored."""
        missing = [k for k in REQUIRED_KEYS if k not in record]
        if missing:
            raise ValueError(f"missing keys: {', '.join(missing)}")
        for key in REQUIRED_KEYS:
            if not isinstance(record[key], str):
                raise ValueError(f"key {key!r} must be a string")
        return cls(
            id=record["id"],
            title=record["title"],
            abstract=record["abstract"],
            body=record["body"],
            lang=record["lang"],
            source=source,
        )

    def to_record(self) -> dict:
        return asdict(self)


def is_complete(doc: Document) -> bool:
    return bool(doc.abstract.strip())


def dedup_key(doc: Document) -> str:
    return doc.id


def dedup(docs: Iterable[Document]) -> list[Document]:
    """Collapse duplicates by dedup_key, keeping the first occurrence in input order."""
    seen: set[str] = set()
    out = []
    for doc in docs:
        key = dedup_key(doc)
        if key not in seen:
            seen.add(key)
            out.append(doc)
    return out


@dataclass
class IngestReport:
    accepted: int = 0
    duplicate_id: int = 0
    malformed: int = 0
    errors: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"accepted": self.accepted, "duplicate_id": self.duplicate_id, "malformed": self.malformed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class Corpus:
    """Ordered, id-unique collection of documents. Treat as immutable once built."""

    def __init__(self, documents: Iterable[Document] = ()):
        self._documents: list[Document] = []
        self._index_of: dict[str, int] = {}
        for doc in documents:
            self._add(doc)

    def _add(self, doc: Document) -> bool:
        if doc.id in self._index_of:
            return False
        self._index_of[doc.id] = len(self._documents)
        self._documents.append(doc)
        return True

    @property
    def documents(self) -> tuple[Document, ...]:
        return tuple(self._documents)

    def index_of(self, doc_id: str) -> int:
        return self._index_of[doc_id]

    def get(self, doc_id: str) -> Document | None:
        pos = self._index_of.get(doc_id)
        return None if pos is None else self._documents[pos]

    def ids(self) -> list[str]:
        return [d.id for d in self._documents]

    def __len__(self) -> int:
        return len(self._documents)

    def __getitem__(self, pos: int) -> Document:
        return self._documents[pos]

    def __iter__(self) -> Iterator[Document]:
        return iter(self._documents)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._index_of


def read_jsonl_records(path: str | Path) -> Iterator[tuple[int, dict | None, str | None]]:
    """Yield (line number, parsed object or None, error message or None), skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"invalid JSON: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield lineno, None, "record is not a JSON object"
                continue
            yield lineno, obj, None


def ingest(path: str | Path, format: str = "jsonl") -> tuple[Corpus, IngestReport]:
    """Read a corpus file. Raises OSError if the file cannot be read."""
    if format not in ("jsonl", "json-lines"):
        raise ValueError(f"unsupported corpus format: {format!r}")
    path = Path(path)
    corpus = Corpus()
    report = IngestReport()
    for lineno, obj, err in read_jsonl_records(path):
        if err is None:
            try:
                doc = Document.from_record(obj)
            except ValueError as exc:
                err = str(exc)
        if err is not None:
            report.malformed += 1
            report.errors.append({"line": lineno, "error": err})
            continue
        if corpus._add(doc):
            report.accepted += 1
        else:
            report.duplicate_id += 1
    if report.duplicate_id:
        log.warning("%s: %d duplicate id(s) skipped", path, report.duplicate_id)
    if report.malformed:
        log.warning("%s: %d malformed record(s)", path, report.malformed)
    return corpus, report
