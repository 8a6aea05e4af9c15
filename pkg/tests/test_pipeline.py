import json
from dataclasses import replace

import pytest

from conftest import CONFIGS, GOLDEN, GOLDEN_QUERY, GOLDEN_QUERY_ID
from oracles import brute_bm25, exhaustive_top, naive_evaluate
from shrag.backends import BackendError, SearchBackend
from shrag.config import DecomposerConfig, load_config
from shrag.documents import Document
from shrag.engine import parse_query, positive_terms
from shrag.keywords import Keyword, KeywordSet, StatisticalProvider, extract_keywords
from shrag.pipeline import (
    PartialCollectionError,
    PipelineError,
    QueryRecord,
    build_components,
    collect_documents,
    detect_lang,
    run,
)
from shrag.query_builder import generate_or_ladder
from shrag.rerank import HashingProvider, rerank_topk


def kwset(words):
    return KeywordSet(tuple(Keyword(w, "en") for w in words))


class TableBackend(SearchBackend):
    """Serves canned result lists keyed by serialized query."""

    def __init__(self, table, fail=(), flaky=None):
        self.table = table
        self.fail = set(fail)
        self.flaky = dict(flaky or {})
        self.calls = []

    def search(self, q, topk):
        self.calls.append(q)
        if q in self.fail:
            raise BackendError("HTTP 503", q)
        if self.flaky.get(q, 0) > 0:
            self.flaky[q] -= 1
            raise BackendError("timeout", q)
        return self.table.get(q, [])[:topk]


def doc(i, abstract="text"):
    return Document(i, title=i, abstract=abstract)


@pytest.fixture(scope="module")
def det_config():
    return load_config(CONFIGS / "deterministic.toml")


@pytest.fixture(scope="module")
def det_components(det_config):
    return build_components(det_config)


def test_collect_union_hand_traced():
    ladder = generate_or_ladder(kwset(["a", "b", "c"]))
    table = {
        "a|b|c": [doc(f"x{i:02d}") for i in range(10)],
        "a|b": [doc(f"x{i:02d}") for i in range(5, 15)],
        "a": [doc(f"x{i:02d}") for i in range(10, 20)],
    }
    docs, hits, failed = collect_documents(ladder, TableBackend(table), per_query_topk=10)
    assert [d.id for d in docs] == [f"x{i:02d}" for i in range(20)]
    assert [n for n, _ in hits] == [3, 2, 1] and failed == []


def test_collect_bounds_and_truncation():
    ladder = generate_or_ladder(kwset(["a", "b"]))
    table = {q: [doc(f"{q}-{i}") for i in range(30)] for q in ["a|b", "a"]}
    docs, hits, _ = collect_documents(ladder, TableBackend(table), per_query_topk=7)
    assert len(docs) <= 7 * len(ladder) and len(docs) == 14
    assert all(len(ids) <= 7 for _, ids in hits)


def test_collect_same_doc_every_level():
    ladder = generate_or_ladder(kwset(["a", "b", "c", "d"]))
    backend = TableBackend({lv.serialized: [doc("same")] for lv in ladder})
    docs, _, _ = collect_documents(ladder, backend)
    assert [d.id for d in docs] == ["same"]


def test_collect_drops_incomplete():
    ladder = generate_or_ladder(kwset(["a"]))
    docs, hits, _ = collect_documents(ladder, TableBackend({"a": [doc("ok"), doc("empty", abstract="  ")]}))
    assert [d.id for d in docs] == ["ok"]
    assert hits == [(1, ["ok", "empty"])]


def test_collect_partial_failure():
    ladder = generate_or_ladder(kwset(["a", "b"]))
    backend = TableBackend({"a|b": [doc("p")], "a": [doc("q")]}, fail={"a"})
    docs, _, failed = collect_documents(ladder, backend)
    assert [d.id for d in docs] == ["p"] and failed == [1]
    with pytest.raises(PartialCollectionError) as info:
        collect_documents(ladder, TableBackend({"a|b": [doc("p")]}, fail={"a"}), allow_partial=False)
    assert info.value.failed_levels == [1] and [d.id for d in info.value.documents] == ["p"]


def test_collect_all_levels_failed():
    ladder = generate_or_ladder(kwset(["a", "b"]))
    with pytest.raises(PartialCollectionError):
        collect_documents(ladder, TableBackend({}, fail={"a|b", "a"}))


def test_collect_retries():
    ladder = generate_or_ladder(kwset(["a"]))
    backend = TableBackend({"a": [doc("z")]}, flaky={"a": 2})
    docs, _, failed = collect_documents(ladder, backend, retries=2)
    assert [d.id for d in docs] == ["z"] and failed == [] and backend.calls == ["a", "a", "a"]
    with pytest.raises(PartialCollectionError):
        collect_documents(ladder, TableBackend({"a": [doc("z")]}, flaky={"a": 3}), retries=2)


def test_collect_workers_same_order():
    ladder = generate_or_ladder(kwset([f"k{i}" for i in range(8)]))
    table = {lv.serialized: [doc(f"{lv.n}-{j}") for j in range(3)] + [doc("shared")] for lv in ladder}
    one = collect_documents(ladder, TableBackend(table), workers=1)
    four = collect_documents(ladder, TableBackend(table), workers=4)
    assert one == four


def test_detect_lang():
    assert detect_lang("무상 교과서 제도") == "ko"
    assert detect_lang("free textbooks 교과서") == "en"


def test_empty_query():
    with pytest.raises(ValueError, match="empty query"):
        QueryRecord("x", "   ")


def test_no_match_fails_at_rerank(det_config, det_components):
    with pytest.raises(PipelineError) as info:
        run(QueryRecord("nm", "zzyzx qwxv"), det_config, det_components)
    assert info.value.stage == "rerank" and "empty document set" in str(info.value)
    assert info.value.trace.retrievals[0].collected == []


def test_golden_trace_byte_identical(det_config):
    _, trace = run(QueryRecord(GOLDEN_QUERY_ID, GOLDEN_QUERY, "en"), det_config)
    assert trace.to_json() == (GOLDEN / "ask_trace.json").read_text(encoding="utf-8")


def test_workers_do_not_change_trace(det_config):
    q = QueryRecord(GOLDEN_QUERY_ID, GOLDEN_QUERY, "en")
    one = run(q, replace(det_config, workers=1))[1].to_json()
    four = run(q, replace(det_config, workers=4))[1].to_json()
    assert one == four


def test_passthrough_equals_off(det_config, det_components):
    q = QueryRecord(GOLDEN_QUERY_ID, GOLDEN_QUERY, "en")
    off = run(q, det_config, det_components)[1].to_json()
    passthrough = run(q, replace(det_config, decomposer=DecomposerConfig(kind="passthrough")), det_components)[1]
    assert passthrough.to_json() == off


def test_golden_trace_stepwise(det_config, toy_corpus, toy_index):
    """Recompute every stage of the golden trace from oracles and the stage functions in isolation."""
    trace = json.loads((GOLDEN / "ask_trace.json").read_text(encoding="utf-8"))
    rt = trace["retrievals"][0]
    kws = extract_keywords(GOLDEN_QUERY, StatisticalProvider(toy_index), k=10, target_lang="ko")
    assert [k["surface"] for k in rt["keyword_set"]] == kws.surfaces
    ladder = generate_or_ladder(kws)
    assert [lv["query"] for lv in rt["ladder"]] == [lv.serialized for lv in ladder]

    positions = {d.id: i for i, d in enumerate(toy_corpus)}
    expected_collected = []
    for level, hit in zip(ladder, rt["per_query_hits"]):
        matches = naive_evaluate(level.ast, toy_corpus)
        bm = brute_bm25(positive_terms(level.ast), toy_corpus)
        top = exhaustive_top([(toy_corpus[p].id, bm[p]) for p in matches], 10)
        assert hit["ids"] == [i for i, _ in top]
        for i, _ in top:
            if toy_corpus[positions[i]].abstract.strip() and i not in expected_collected:
                expected_collected.append(i)
    assert rt["collected"] == expected_collected

    docs = [toy_corpus[positions[i]] for i in expected_collected]
    top5 = rerank_topk(GOLDEN_QUERY, docs, 5, HashingProvider(256, det_config.seed))
    assert [t["id"] for t in trace["top5"]] == [sd.doc.id for sd in top5]
    for t, sd in zip(trace["top5"], top5):
        assert t["score"] == pytest.approx(sd.score, abs=1e-12)

    ans = trace["answer"]
    assert ans["title"] and ans["introduction"] and ans["main_body"]
    assert set(ans["citations"]) <= {t["id"] for t in trace["top5"]}
    assert trace["schema_version"] == 1 and "timings_ms" not in trace


def test_end_to_end_invariants(det_config, det_components):
    queries = ["photosynthesis chlorophyll light", "백신 냉장 보관", "free school meals attendance", GOLDEN_QUERY]
    for i, text in enumerate(queries):
        answer, trace = run(QueryRecord(f"q{i}", text, detect_lang(text)), det_config, det_components)
        rt = trace.retrievals[0]
        assert len(rt.collected) <= det_config.per_query_topk * len(rt.ladder)
        assert len(set(rt.collected)) == len(rt.collected)
        top_ids = [i for i, _ in trace.top5]
        assert set(top_ids) <= set(rt.collected) and len(top_ids) == min(5, len(rt.collected))
        assert answer.title and answer.introduction and answer.main_body
        assert set(answer.citations) <= set(top_ids)


class TwoPartDecomposer:
    def generate(self, prompt, context=None, seed=None):
        return '["free textbook 교과서", "vaccine refrigerated storage"]'


def test_subquery_fusion(det_config, det_components):
    comps = replace(det_components, decomposer=TwoPartDecomposer())
    cfg = replace(det_config, decomposer=DecomposerConfig(kind="llm", endpoint="http://unused"))
    answer, trace = run(QueryRecord("multi", "textbooks and vaccines", "en"), cfg, comps)
    assert trace.sub_queries == ["free textbook 교과서", "vaccine refrigerated storage"]
    assert len(trace.retrievals) == 2
    first, second = ([i for i, _ in r.top] for r in trace.retrievals)
    fused = [i for i, _ in trace.top5]
    assert fused == list(dict.fromkeys(first + second))
    assert any(i.startswith("vac") for i in fused) and any(i.startswith("edu") for i in fused)
    assert set(answer.citations) <= set(fused)


class BrokenGenerator:
    def generate(self, prompt, context=None, seed=None):
        raise RuntimeError("model unavailable")


def test_generate_failure_keeps_trace(det_config, det_components):
    comps = replace(det_components, generator=BrokenGenerator())
    with pytest.raises(PipelineError) as info:
        run(QueryRecord("g", GOLDEN_QUERY), det_config, comps)
    assert info.value.stage == "generate"
    assert info.value.trace.top5
