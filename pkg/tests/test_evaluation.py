import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CONFIGS, DATA
from shrag.config import load_config
from shrag.evaluation import (
    EvalQuery,
    evidence_coverage,
    load_evalset,
    qsr,
    qsr_by_lang,
    run_and_sweep,
    run_eval,
    title_key,
)
from shrag.pipeline import QueryRecord, build_components


def ev(qid, rel, lang="en"):
    return EvalQuery(QueryRecord(qid, f"query {qid}", lang), frozenset(rel))


def test_qsr_two_of_three():
    pairs = [(ev("a", {"x"}), ["x", "y"]), (ev("b", {"z"}), ["y"]), (ev("c", {"p", "q"}), ["q"])]
    assert qsr(pairs) == pytest.approx(66.666667, abs=1e-6)


def test_qsr_all_hit():
    assert qsr([(ev(str(i), {"d"}), ["d"]) for i in range(7)]) == 100.0


def test_qsr_zero_and_empty():
    assert qsr([(ev("a", {"x"}), [])]) == 0.0
    with pytest.raises(ValueError, match="no queries"):
        qsr([])


def test_qsr_split_average_identity():
    # 25 English + 25 Korean: overall equals the mean of the two halves when halves are equal-sized
    en = [(ev(f"e{i}", {"r"}, "en"), ["r"] if i < 24 else []) for i in range(25)]
    ko = [(ev(f"k{i}", {"r"}, "ko"), ["r"] if i < 23 else []) for i in range(25)]
    by_lang = qsr_by_lang(en + ko)
    assert by_lang == {"en": pytest.approx(96.0, abs=1e-9), "ko": pytest.approx(92.0, abs=1e-9)}
    assert qsr(en + ko) == pytest.approx((by_lang["en"] + by_lang["ko"]) / 2, abs=1e-9)
    assert qsr(en + ko) == pytest.approx(94.0, abs=1e-9)


@given(st.integers(1, 30), st.integers(1, 30), st.data())
def test_split_average_identity_property(n, hits_a, data):
    hits_a = min(hits_a, n)
    hits_b = data.draw(st.integers(0, n))
    a = [(ev(f"a{i}", {"r"}, "en"), ["r"] if i < hits_a else []) for i in range(n)]
    b = [(ev(f"b{i}", {"r"}, "ko"), ["r"] if i < hits_b else []) for i in range(n)]
    parts = qsr_by_lang(a + b)
    assert math.isclose(qsr(a + b), (parts["en"] + parts["ko"]) / 2, abs_tol=1e-9)


def test_coverage_cases():
    q = ev("a", {"r1", "r2", "r3", "r4"})
    assert evidence_coverage(q, []) == 0.0
    assert evidence_coverage(q, ["r1", "x"]) == 0.25
    assert evidence_coverage(q, ["r1", "r2", "r3", "r4", "x"]) == 1.0


@given(st.sets(st.sampled_from("abcdefgh"), min_size=1), st.sets(st.sampled_from("abcdefgh")),
       st.sets(st.sampled_from("abcdefgh")))
def test_coverage_monotone_in_retrieved_set(rel, s1, extra):
    q = ev("a", rel)
    assert evidence_coverage(q, s1) <= evidence_coverage(q, s1 | extra)
    assert 0.0 <= evidence_coverage(q, s1) <= 1.0


def test_title_normalizer():
    q = EvalQuery(QueryRecord("t", "x"), frozenset({"Free Textbooks: A Review"}))
    assert evidence_coverage(q, ["free textbooks a review"], normalize=title_key) == 1.0
    assert evidence_coverage(q, ["free textbooks a review"]) == 0.0


def test_eval_query_needs_relevant():
    with pytest.raises(ValueError):
        ev("a", set())


def test_load_evalset_errors(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text('{"query_id": "a", "text": "t", "relevant_ids": []}\n', encoding="utf-8")
    with pytest.raises(ValueError, match=":1:"):
        load_evalset(p)


@pytest.fixture(scope="module")
def sweep_setup():
    cfg = load_config(CONFIGS / "sweep.toml")
    return cfg, build_components(cfg), load_evalset(DATA / "sweep_eval.jsonl")


def test_sweep_shape_and_direction(sweep_setup):
    cfg, comps, evals = sweep_setup
    report = run_and_sweep(evals, cfg, repetitions=10, seed=cfg.seed, components=comps)
    assert [r.and_count for r in report.rows] == list(range(10))
    assert report.repetitions_run == 1 and report.notes
    assert report.rows[0].coverage >= report.rows[9].coverage
    assert report.rows[0].avg_docs >= report.rows[9].avg_docs
    assert all(r.coverage_std == 0.0 and r.avg_docs_std == 0.0 for r in report.rows)
    assert all(r.errors == 0 for r in report.rows)


def test_sweep_outputs(tmp_path, sweep_setup):
    cfg, comps, evals = sweep_setup
    report = run_and_sweep(evals[:4], cfg, seed=1, components=comps, and_counts=range(3))
    paths = report.write(tmp_path)
    assert sorted(p.name for p in paths) == ["sweep.csv", "sweep.json", "sweep_plot.tsv"]
    csv_lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert csv_lines[0].startswith("and_count,coverage,coverage_std") and len(csv_lines) == 4
    data = json.loads((tmp_path / "sweep.json").read_text())
    assert len(data["rows"]) == 3 and data["seed"] == 1
    assert len((tmp_path / "sweep_plot.tsv").read_text().splitlines()) == 4


def test_sweep_clamps_short_keyword_sets(sweep_setup):
    cfg, comps, _ = sweep_setup
    short = [EvalQuery(QueryRecord("s", "one two", "en"), frozenset({"x"}))]
    report = run_and_sweep(short, cfg, components=comps, and_counts=[0, 1, 5])
    assert [r.clamped for r in report.rows] == [0, 0, 1]


class Exploding:
    def extract(self, query, lang, k, seed=None):
        raise RuntimeError("boom")


def test_sweep_counts_errors(sweep_setup):
    from dataclasses import replace

    cfg, comps, evals = sweep_setup
    report = run_and_sweep(evals[:3], cfg, components=replace(comps, extractor=Exploding()), and_counts=[0, 1])
    assert [r.errors for r in report.rows] == [3, 3]
    assert all(r.coverage == 0.0 for r in report.rows)


def test_run_eval_sweep_fixture(sweep_setup):
    cfg, comps, evals = sweep_setup
    report = run_eval(evals, cfg, comps)
    assert report.qsr == 100.0 and set(report.per_lang) == {"en", "ko"}
    assert len(report.per_query) == 20 and report.errors == 0
