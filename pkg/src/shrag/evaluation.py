"""Retrieval evaluation: query success rate, evidence coverage, and the AND-count sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import statistics
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .config import PipelineConfig, derive_seed
from .documents import read_jsonl_records
from .io import atomic_write_text
from .keywords import extract_keywords
from .pipeline import (
    Components,
    PipelineError,
    QueryRecord,
    RetrievalTrace,
    build_components,
    collect_documents,
    retrieve,
)
from .query_builder import LadderLevel, generate_and_variant

log = logging.getLogger(__name__)

Normalizer = Callable[[str], str]
SWEEP_AND_COUNTS = tuple(range(10))


@dataclass(frozen=True)
class EvalQuery:
    query: QueryRecord
    relevant_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "relevant_ids", frozenset(self.relevant_ids))
        if not self.relevant_ids:
            raise ValueError(f"query {self.query.id}: relevant_ids must be non-empty")


def load_evalset(path: str | Path) -> list[EvalQuery]:
    out = []
    for lineno, obj, err in read_jsonl_records(path):
        if err is not None:
            raise ValueError(f"{path}:{lineno}: {err}")
        try:
            rec = QueryRecord(str(obj["query_id"]), obj["text"], obj.get("lang", "en"))
            out.append(EvalQuery(rec, frozenset(map(str, obj["relevant_ids"]))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad eval record: {exc}") from exc
    return out


def title_key(text: str) -> str:
    """Case-fold and strip punctuation, for matching on titles instead of ids."""
    text = unicodedata.normalize("NFKC", text).casefold()
    text = "".join(c if not unicodedata.category(c).startswith("P") else " " for c in text)
    return re.sub(r"\s+", " ", text).strip()


def _norm(ids: Iterable[str], normalize: Normalizer | None) -> set[str]:
    return {normalize(i) for i in ids} if normalize else set(ids)


def evidence_coverage(eval_query: EvalQuery, retrieved_ids: Iterable[str], normalize: Normalizer | None = None) -> float:
    relevant = _norm(eval_query.relevant_ids, normalize)
    return len(relevant & _norm(retrieved_ids, normalize)) / len(relevant)


def qsr(evals: Sequence[tuple[EvalQuery, Iterable[str]]], normalize: Normalizer | None = None) -> float:
    """Percentage of queries whose retrieved set hits at least one relevant document."""
    if not evals:
        raise ValueError("no queries")
    hits = sum(1 for q, got in evals if _norm(q.relevant_ids, normalize) & _norm(got, normalize))
    return 100.0 * hits / len(evals)


def qsr_by_lang(evals: Sequence[tuple[EvalQuery, Iterable[str]]], normalize: Normalizer | None = None) -> dict[str, float]:
    groups: dict[str, list] = {}
    for pair in evals:
        groups.setdefault(pair[0].query.lang, []).append(pair)
    return {lang: qsr(group, normalize) for lang, group in sorted(groups.items())}


# --- QSR evaluation over an eval set ---------------------------------------


@dataclass
class EvalReport:
    qsr: float
    per_lang: dict[str, float]
    per_query: list[dict]
    errors: int

    def to_dict(self) -> dict:
        return asdict(self)


def _map_ordered(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_eval(evals: Sequence[EvalQuery], config: PipelineConfig, components: Components | None = None,
             normalize: Normalizer | None = None) -> EvalReport:
    """Steps 1-3 per query; the collected set is S_i. A failing query counts as unsuccessful."""
    if not evals:
        raise ValueError("no queries")
    comps = components or build_components(config)

    def one(ev: EvalQuery):
        rt = RetrievalTrace(sub_query=ev.query.text)
        try:
            docs = retrieve(ev.query.text, config, comps, rt, {})
            return [d.id for d in docs], None
        except PipelineError as exc:
            log.warning("query %s failed: %s", ev.query.id, exc)
            return [], str(exc)

    results = _map_ordered(one, list(evals), config.workers)
    pairs = [(ev, ids) for ev, (ids, _) in zip(evals, results)]
    per_query = [
        {
            "query_id": ev.query.id,
            "lang": ev.query.lang,
            "success": bool(_norm(ev.relevant_ids, normalize) & _norm(ids, normalize)),
            "coverage": evidence_coverage(ev, ids, normalize),
            "n_docs": len(ids),
            "error": err,
        }
        for ev, (ids, err) in zip(evals, results)
    ]
    return EvalReport(
        qsr=qsr(pairs, normalize),
        per_lang=qsr_by_lang(pairs, normalize),
        per_query=per_query,
        errors=sum(1 for _, err in results if err),
    )


# --- AND-count sweep --------------------------------------------------------


@dataclass
class SweepRow:
    and_count: int
    coverage: float
    coverage_std: float
    pooled_coverage: float
    pooled_coverage_std: float
    avg_docs: float
    avg_docs_std: float
    errors: int
    clamped: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    repetitions: int
    repetitions_run: int
    seed: int
    n_queries: int
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "repetitions_run": self.repetitions_run,
            "seed": self.seed,
            "n_queries": self.n_queries,
            "notes": self.notes,
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(SweepRow.__dataclass_fields__)
        writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(row).items()})
        return buf.getvalue()

    def to_plot_data(self) -> str:
        lines = ["# and_count\tcoverage\tavg_docs"]
        lines += [f"{r.and_count}\t{r.coverage!r}\t{r.avg_docs!r}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = {
            "sweep.csv": self.to_csv(),
            "sweep.json": self.to_json(),
            "sweep_plot.tsv": self.to_plot_data(),
        }
        for name, text in files.items():
            atomic_write_text(out_dir / name, text)
        return [out_dir / n for n in files]


def _collect_and_variant(ev: EvalQuery, and_count: int, config: PipelineConfig, comps: Components, seed: int):
    """Returns (retrieved ids, clamped flag). Extraction -> AND variant of the full keyword set -> retrieval."""
    kws = extract_keywords(ev.query.text, comps.extractor, k=config.keyword_k, target_lang=config.target_lang,
                           fallback=comps.fallback_extractor, seed=seed)
    effective = min(and_count, len(kws) - 1)
    sq = generate_and_variant(kws, effective)
    docs, _, _ = collect_documents([LadderLevel(len(kws), sq.ast, sq.serialized)], comps.backend,
                                   config.per_query_topk, 1, comps.retries, allow_partial=False)
    return [d.id for d in docs], effective != and_count


def _pstdev(xs: list[float]) -> float:
    return statistics.pstdev(xs) if len(xs) > 1 else 0.0


def run_and_sweep(evals: Sequence[EvalQuery], config: PipelineConfig, repetitions: int = 10, seed: int = 0,
                  components: Components | None = None, and_counts: Sequence[int] = SWEEP_AND_COUNTS,
                  normalize: Normalizer | None = None) -> SweepReport:
    """Coverage and collected-set size per AND count, averaged over queries and repetitions.

    Keyword sets shorter than ``and_count + 1`` use the all-AND query instead (counted in ``clamped``).
    With fully deterministic providers the repetitions would be identical, so only one is run.
    """
    if not evals:
        raise ValueError("no queries")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    comps = components or build_components(config)
    notes = []
    reps_run = repetitions
    if config.deterministic and repetitions > 1:
        reps_run = 1
        notes.append(f"deterministic providers: 1 repetition run in place of {repetitions}")

    rows = []
    for c in and_counts:
        covs, pooled, sizes = [], [], []
        errors = clamped = 0
        for rep in range(reps_run):
            def one(ev, rep=rep, c=c):
                s = derive_seed(seed, "sweep", c, rep, ev.query.id)
                try:
                    ids, was_clamped = _collect_and_variant(ev, c, config, comps, s)
                    return ids, was_clamped, None
                except Exception as exc:
                    log.warning("sweep and_count=%d query %s failed: %s", c, ev.query.id, exc)
                    return [], False, str(exc)

            results = _map_ordered(one, list(evals), config.workers)
            rel_total = hit_total = 0
            rep_cov, rep_size = [], []
            for ev, (ids, was_clamped, err) in zip(evals, results):
                errors += err is not None
                clamped += was_clamped
                rel = _norm(ev.relevant_ids, normalize)
                hit = len(rel & _norm(ids, normalize))
                rel_total += len(rel)
                hit_total += hit
                rep_cov.append(hit / len(rel))
                rep_size.append(len(ids))
            covs.append(statistics.fmean(rep_cov))
            pooled.append(hit_total / rel_total)
            sizes.append(statistics.fmean(rep_size))
        rows.append(SweepRow(
            and_count=c,
            coverage=statistics.fmean(covs),
            coverage_std=_pstdev(covs),
            pooled_coverage=statistics.fmean(pooled),
            pooled_coverage_std=_pstdev(pooled),
            avg_docs=statistics.fmean(sizes),
            avg_docs_std=_pstdev(sizes),
            errors=errors,
            clamped=clamped,
        ))
    return SweepReport(rows, repetitions, reps_run, seed, len(evals), notes)
