from __future__ import annotations

import json
import logging
import random

import pytest
from hypothesis import given, settings, strategies as st

from aspecteval.core import RankedRun
from aspecteval.corpus_io import (
    format_trace,
    load_aspect_qrels,
    load_corpus,
    load_queries,
    read_run_file,
    read_trace,
    write_aspect_qrels,
    write_run_file,
    write_trace,
)
from aspecteval.errors import InvalidGold, IoError, RankOrderError, SchemaError, TraceVersionError
from aspecteval.harness import AnswerAction, RetrievedDoc, RoundRecord, SearchTrace


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_corpus_two_lines(tmp_path):
    p = write_lines(tmp_path / "c.jsonl", [{"id": "d1", "contents": "x"}, {"id": "d2", "contents": "y"}])
    assert list(load_corpus(p)) == [("d1", "x"), ("d2", "y")]


def test_corpus_missing_contents(tmp_path):
    p = write_lines(tmp_path / "c.jsonl", [{"id": "d1", "contents": "x"}, {"id": "d2"}])
    with pytest.raises(SchemaError) as err:
        list(load_corpus(p))
    assert err.value.line == 2


def test_corpus_missing_file(tmp_path):
    with pytest.raises(IoError):
        list(load_corpus(tmp_path / "nope.jsonl"))


def _qrec(qid="q1", likert=(3, 3, 3, 2), gold=None, **extra):
    aspects = [{"id": f"a{i + 1}", "description": f"aspect {i + 1}", "likert": l} for i, l in enumerate(likert)]
    gold = gold if gold is not None else [{"doc_id": f"d{i}", "aspect_id": f"a{i + 1}"} for i in range(len(likert))]
    return {"query_id": qid, "subset": "biology", "query": "why?", "aspects": aspects, "gold": gold, **extra}


def test_qrels_weights(tmp_path):
    q = load_aspect_qrels(write_lines(tmp_path / "q.jsonl", [_qrec()]))["q1"]
    assert [a.weight for a in q.aspects] == pytest.approx([3 / 11, 3 / 11, 3 / 11, 2 / 11], abs=1e-12)
    assert len(q.gold) == 4


def test_qrels_duplicate_gold(tmp_path):
    rec = _qrec(gold=[{"doc_id": "d1", "aspect_id": "a1"}, {"doc_id": "d1", "aspect_id": "a2"}])
    with pytest.raises(InvalidGold):
        load_aspect_qrels(write_lines(tmp_path / "q.jsonl", [rec]))


def test_qrels_dangling_aspect(tmp_path):
    rec = _qrec(gold=[{"doc_id": "d1", "aspect_id": "a9"}])
    with pytest.raises(InvalidGold):
        load_aspect_qrels(write_lines(tmp_path / "q.jsonl", [rec]))


def test_qrels_duplicate_query(tmp_path):
    with pytest.raises(SchemaError):
        load_aspect_qrels(write_lines(tmp_path / "q.jsonl", [_qrec(), _qrec()]))


def test_qrels_supplied_weight_warning(tmp_path, caplog):
    rec = _qrec(likert=(5, 3, 2))
    for a, w in zip(rec["aspects"], (0.5, 0.3, 0.25)):
        a["weight"] = w
    with caplog.at_level(logging.WARNING):
        q = load_aspect_qrels(write_lines(tmp_path / "q.jsonl", [rec]))["q1"]
    assert q.aspects.weights["a3"] == 0.2
    assert any("supplied weight" in r.message for r in caplog.records)


def test_qrels_multi_aspect_split(tmp_path):
    rec = _qrec(likert=(3, 3), gold=[{"doc_id": "d1", "aspect_ids": ["a1", "a2"]}])
    q = load_aspect_qrels(write_lines(tmp_path / "q.jsonl", [rec]))["q1"]
    assert q.gold.aspect_of == {"d1": "a1", "d1#a2": "a2"}
    assert q.provenance == {"d1#a2": "d1"}


def test_qrels_round_trip(tmp_path):
    recs = [_qrec("q1"), _qrec("q2", likert=(3, 3), gold=[{"doc_id": "d1", "aspect_ids": ["a1", "a2"]}])]
    first = load_aspect_qrels(write_lines(tmp_path / "q.jsonl", recs))
    write_aspect_qrels(first, tmp_path / "again.jsonl")
    second = load_aspect_qrels(tmp_path / "again.jsonl")
    assert dict(first) == dict(second)
    write_aspect_qrels(second, tmp_path / "third.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == (tmp_path / "third.jsonl").read_bytes()
    assert first.stats() == {"queries": 2, "mean_aspects": 3.0, "mean_gold": 3.0}


def test_load_queries_from_qrels(tmp_path):
    qs = load_queries(write_lines(tmp_path / "q.jsonl", [_qrec("q1"), _qrec("q2")]))
    assert [(q.query_id, q.subset) for q in qs] == [("q1", "biology"), ("q2", "biology")]


def test_run_empty(tmp_path):
    write_run_file({}, tmp_path / "r.run")
    assert (tmp_path / "r.run").read_text() == ""
    assert read_run_file(tmp_path / "r.run") == {}


def test_run_three_docs(tmp_path):
    run = RankedRun.from_scores("q1", [("a", 3.0), ("b", 2.5), ("c", 1.0)])
    write_run_file({"q1": run}, tmp_path / "r.run", tag="bm25")
    lines = (tmp_path / "r.run").read_text().splitlines()
    assert lines == ["q1 Q0 a 1 3.000000 bm25", "q1 Q0 b 2 2.500000 bm25", "q1 Q0 c 3 1.000000 bm25"]
    assert read_run_file(tmp_path / "r.run") == {"q1": run}


def test_run_rank_order_error(tmp_path):
    (tmp_path / "r.run").write_text("q1 Q0 a 2 3.0 t\nq1 Q0 b 1 2.0 t\n")
    with pytest.raises(RankOrderError):
        read_run_file(tmp_path / "r.run")


def test_run_bad_columns(tmp_path):
    (tmp_path / "r.run").write_text("q1 Q0 a 1 3.0\n")
    with pytest.raises(SchemaError):
        read_run_file(tmp_path / "r.run")


def test_run_fuzz_round_trip(tmp_path):
    rng = random.Random(9)
    runs = {}
    rows = 0
    while rows < 1000:
        qid = f"q{len(runs)}"
        n = min(rng.randint(1, 60), 1000 - rows)
        pairs = [(f"doc{rng.randint(0, 10**6)}", rng.uniform(-5, 40)) for _ in range(n)]
        pairs = list(dict(pairs).items())
        # force some exact ties and ties that only appear after rounding
        if len(pairs) > 3:
            pairs[1] = (pairs[1][0], pairs[0][1])
            pairs[3] = (pairs[3][0], pairs[2][1] + 1e-8)
        runs[qid] = RankedRun.from_scores(qid, pairs)
        rows += len(pairs)
    write_run_file(runs, tmp_path / "a.run")
    back = read_run_file(tmp_path / "a.run")
    write_run_file(back, tmp_path / "b.run")
    assert (tmp_path / "a.run").read_bytes() == (tmp_path / "b.run").read_bytes()
    assert sum(len(r) for r in back.values()) == rows


def _trace():
    t = SearchTrace("q1", "Did neanderthals make vitamin C?", "fixed")
    t.rounds.append(RoundRecord(1, "vitamin c", (RetrievedDoc("d1", 3.25, "snip ü", True),
                                                 RetrievedDoc("d2", 1.0, "x", False)), AnswerAction("a1", 40.0)))
    t.rounds.append(RoundRecord(2, "gulo", (), AnswerAction("a2", None)))
    t.events.append({"round": 1, "kind": "exchange", "request": {"m": [1, 2]}, "response": {"ok": True}})
    t.stop_reason, t.final_answer, t.confidence = "fixed-budget", "a2", None
    return t


def test_trace_round_trip(tmp_path):
    t = _trace()
    write_trace(t, tmp_path / "t.jsonl")
    assert read_trace(tmp_path / "t.jsonl") == t
    assert format_trace(read_trace(tmp_path / "t.jsonl")) == (tmp_path / "t.jsonl").read_text(encoding="utf-8")


def test_trace_incomplete_round_trip(tmp_path):
    t = SearchTrace("q", "x", "adaptive")
    write_trace(t, tmp_path / "t.jsonl")
    back = read_trace(tmp_path / "t.jsonl")
    assert back == t and not back.complete


def test_trace_version_mismatch(tmp_path):
    write_trace(_trace(), tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    header = json.loads(lines[0])
    header["version"] = 99
    (tmp_path / "t.jsonl").write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    with pytest.raises(TraceVersionError):
        read_trace(tmp_path / "t.jsonl")


texts = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=30)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(texts, st.lists(st.tuples(texts, st.floats(-1e6, 1e6), texts, st.booleans()), max_size=5),
                          st.none() | texts), max_size=6),
       st.sampled_from(["fixed-budget", "agent-stop", "round-cap"]))
def test_trace_round_trip_fuzz(tmp_path_factory, rounds, reason):
    t = SearchTrace("q", "question", "adaptive")
    for i, (q, docs, ans) in enumerate(rounds, start=1):
        t.rounds.append(RoundRecord(i, q, tuple(RetrievedDoc(*d) for d in docs),
                                    None if ans is None else AnswerAction(ans)))
    t.stop_reason, t.final_answer = reason, "final"
    path = tmp_path_factory.mktemp("tr") / "t.jsonl"
    write_trace(t, path)
    assert read_trace(path) == t
