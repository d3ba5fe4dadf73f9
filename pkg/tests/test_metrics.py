from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from aspecteval.core import AspectSet, GoldAssignment, MetricConfig, QueryQrels, RankedRun
from aspecteval.errors import MissingQrels, OracleTooLarge, RankOutOfRange, ZeroGold, ZeroIdeal
from aspecteval.metrics import (
    FLAG_EMPTY_GOLD,
    a_recall,
    alpha_dcg,
    alpha_ndcg,
    aspect_gain,
    coverage_state,
    evaluate_run,
    greedy_ideal_order,
    ideal_alpha_dcg_exhaustive,
    ideal_alpha_dcg_greedy,
    ndcg_at_k,
    recall_at_k,
)

from .conftest import make_instance
from .oracles import alpha_dcg_mp

UNIT = AspectSet.from_likert("q", [("a1", 3)])
HALVES = AspectSet.from_likert("q", [("a1", 3), ("a2", 3)])
W532 = AspectSet.from_likert("q", [("a1", 5), ("a2", 3), ("a3", 2)])


def run_of(*docs):
    return RankedRun.from_order("q", list(docs))


# gain

def test_gain_first_and_second_of_aspect():
    gold = GoldAssignment.from_mapping("q", {"g1": "a1", "g2": "a1", "h": "a2"})
    run = run_of("g1", "g2")
    assert aspect_gain(1, run, gold, HALVES, 0.5) == 0.5
    assert aspect_gain(2, run, gold, HALVES, 0.5) == 0.25


def test_gain_third_of_aspect():
    gold = GoldAssignment.from_mapping("q", {"g1": "a2", "g2": "a2", "g3": "a2"})
    run = run_of("g1", "x", "g2", "g3")
    assert aspect_gain(4, run, gold, W532, 0.5) == pytest.approx(0.075, abs=1e-15)
    assert aspect_gain(2, run, gold, W532, 0.5) == 0.0


def test_gain_rank_out_of_range():
    with pytest.raises(RankOutOfRange):
        aspect_gain(3, run_of("a", "b"), GoldAssignment("q", ()), UNIT)
    with pytest.raises(RankOutOfRange):
        aspect_gain(0, run_of("a"), GoldAssignment("q", ()), UNIT)


def test_coverage_counts():
    gold = GoldAssignment.from_mapping("q", {"g1": "a1", "g2": "a1", "g3": "a3"})
    run = run_of("g1", "x", "g3", "g2")
    assert coverage_state(run, gold, W532, 2) == {"a1": 1, "a2": 0, "a3": 0}
    assert coverage_state(run, gold, W532, 4) == {"a1": 2, "a2": 0, "a3": 1}


# alpha-DCG

def test_dcg_no_gold():
    gold = GoldAssignment.from_mapping("q", {"g": "a1"})
    assert alpha_dcg(run_of("x", "y"), gold, UNIT, 0.5, 5) == 0.0


def test_dcg_single_gold_rank1():
    gold = GoldAssignment.from_mapping("q", {"g": "a1"})
    assert alpha_dcg(run_of("g", "x"), gold, UNIT, 0.5, 5) == 1.0


def test_dcg_two_same_aspect():
    gold = GoldAssignment.from_mapping("q", {"g1": "a1", "g2": "a1"})
    # 1 + 0.5/log2(3), 40-digit mpmath: 1.3154648767857287185...
    assert alpha_dcg(run_of("g1", "g2"), gold, UNIT, 0.5, 5) == pytest.approx(1.315465, abs=1e-6)
    assert alpha_dcg(run_of("g1", "g2"), gold, UNIT, 0.5, 5) == pytest.approx(1.3154648767857287, abs=1e-14)


# ideal

def test_greedy_single():
    gold = GoldAssignment.from_mapping("q", {"g": "a1"})
    for k in (1, 3, 25):
        assert ideal_alpha_dcg_greedy(gold, UNIT, 0.5, k) == 1.0


def test_greedy_two_equal_aspects():
    gold = GoldAssignment.from_mapping("q", {"g1": "a1", "g2": "a2"})
    assert ideal_alpha_dcg_greedy(gold, HALVES, 0.5, 2) == pytest.approx(0.8154648767857287, abs=1e-14)


def test_greedy_weighted_three():
    gold = GoldAssignment.from_mapping("q", {"x3": "a3", "x1": "a1", "x2": "a2"})
    assert greedy_ideal_order(gold, W532, 0.5, 3) == ["x1", "x2", "x3"]
    val = ideal_alpha_dcg_greedy(gold, W532, 0.5, 3)
    assert val == pytest.approx(0.7892789260714372, abs=1e-14)
    assert val == pytest.approx(ideal_alpha_dcg_exhaustive(gold, W532, 0.5, 3), abs=1e-12)


def test_greedy_tie_break_by_doc_id():
    gold = GoldAssignment.from_mapping("q", {"b": "a1", "a": "a2"})
    assert greedy_ideal_order(gold, HALVES, 0.5, 2) == ["a", "b"]


def test_greedy_positions_beyond_pool_contribute_nothing():
    gold = GoldAssignment.from_mapping("q", {"g1": "a1", "g2": "a2"})
    assert ideal_alpha_dcg_greedy(gold, HALVES, 0.5, 50) == ideal_alpha_dcg_greedy(gold, HALVES, 0.5, 2)


def test_ideal_empty_gold():
    with pytest.raises(ZeroIdeal):
        ideal_alpha_dcg_greedy(GoldAssignment("q", ()), UNIT, 0.5, 3)
    with pytest.raises(ZeroIdeal):
        ideal_alpha_dcg_exhaustive(GoldAssignment("q", ()), UNIT, 0.5, 3)


def test_exhaustive_guard():
    gold = GoldAssignment("q", tuple((f"g{i}", "a1") for i in range(11)))
    with pytest.raises(OracleTooLarge):
        ideal_alpha_dcg_exhaustive(gold, UNIT, 0.5, 5)


def test_exhaustive_matches_brute_force_over_documents():
    # permutations over document ids directly, independent of the label-sequence shortcut
    from itertools import permutations

    rng = random.Random(5)
    for _ in range(30):
        aspects, gold = make_instance(rng, max_gold=6)
        aspect_of = gold.aspect_of
        k = rng.randint(1, 7)
        brute = max(
            alpha_dcg(RankedRun.from_order("q", list(p)), gold, aspects, 0.5, k)
            for p in permutations(aspect_of)
        )
        assert ideal_alpha_dcg_exhaustive(gold, aspects, 0.5, k) == pytest.approx(brute, abs=1e-12)


def test_greedy_equals_exhaustive_sample():
    rng = random.Random(11)
    for _ in range(200):
        aspects, gold = make_instance(rng)
        k = rng.randint(1, 10)
        alpha = rng.choice([0.0, 0.25, 0.5, 0.9, 1.0])
        g = ideal_alpha_dcg_greedy(gold, aspects, alpha, k)
        e = ideal_alpha_dcg_exhaustive(gold, aspects, alpha, k)
        assert abs(g - e) <= 1e-9


# alpha-nDCG

def test_andcg_ideal_ordered_run_is_one():
    gold = GoldAssignment.from_mapping("q", {"a": "a1", "b": "a1", "c": "a2", "d": "a3"})
    cfg = MetricConfig(cutoffs=(4, 10, 25))
    run = RankedRun.from_order("q", greedy_ideal_order(gold, W532, 0.5, 100))
    res = alpha_ndcg(run, gold, W532, cfg)
    assert all(res[k] == 1.0 for k in cfg.cutoffs)


def test_andcg_no_gold_retrieved():
    gold = GoldAssignment.from_mapping("q", {"g": "a1"})
    assert alpha_ndcg(run_of("x"), gold, UNIT, MetricConfig(cutoffs=(3,)))[3] == 0.0


def test_andcg_worked_example():
    gold = GoldAssignment.from_mapping("q", {"g_a": "a1", "g_b": "a1"})
    res = alpha_ndcg(run_of("g_b", "x", "g_a"), gold, UNIT, MetricConfig(cutoffs=(3,)))
    # (1 + 0.5/2) / (1 + 0.5/log2 3) = 0.95023441678983569...
    assert res[3] == pytest.approx(0.950234, abs=1e-6)
    assert res[3] == pytest.approx(0.9502344167898357, abs=1e-14)


def test_andcg_empty_gold_flagged():
    res = alpha_ndcg(run_of("x"), GoldAssignment("q", ()), UNIT, MetricConfig(cutoffs=(5,)))
    assert res[5] == 0.0
    assert FLAG_EMPTY_GOLD in res.flags


# A-Recall / Recall / NDCG

def test_a_recall_examples():
    gold = GoldAssignment.from_mapping("q", {"g1": "a1", "g2": "a2", "g3": "a3"})
    assert a_recall(run_of("g1", "g2", "g3"), gold, W532, 3) == pytest.approx(1.0, abs=1e-15)
    assert a_recall(run_of("x", "y"), gold, W532, 2) == 0.0
    assert a_recall(run_of("g3", "x", "g1"), gold, W532, 3) == pytest.approx(0.7, abs=1e-15)


def test_recall_examples():
    gold = GoldAssignment("q", tuple((f"g{i}", "a1") for i in range(7)))
    assert recall_at_k(run_of(*[f"g{i}" for i in range(7)]), gold, 7) == 1.0
    assert recall_at_k(run_of("x"), gold, 25) == 0.0
    docs = ["g0", "x1", "g3", "x2", "g6"] + [f"y{i}" for i in range(30)]
    assert recall_at_k(run_of(*docs), gold, 25) == pytest.approx(3 / 7, abs=1e-15)
    with pytest.raises(ZeroGold):
        recall_at_k(run_of("x"), GoldAssignment("q", ()), 5)


def test_ndcg_examples():
    gold = GoldAssignment.from_mapping("q", {"g1": "a1", "g2": "a1"})
    assert ndcg_at_k(run_of("g2", "g1", "x"), gold, 10) == pytest.approx(1.0, abs=1e-15)
    assert ndcg_at_k(run_of("x"), gold, 10) == 0.0
    single = GoldAssignment.from_mapping("q", {"g": "a1"})
    assert ndcg_at_k(run_of("x", "y", "g"), single, 10) == 0.5
    with pytest.raises(ZeroGold):
        ndcg_at_k(run_of("x"), GoldAssignment("q", ()), 5)


# properties

instances = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=150, deadline=None)
@given(instances)
def test_dcg_matches_high_precision_oracle(seed):
    rng = random.Random(seed)
    aspects, gold = make_instance(rng)
    docs = gold.doc_ids + [f"n{i}" for i in range(rng.randint(0, 6))]
    rng.shuffle(docs)
    alpha = rng.random()
    k = rng.randint(1, len(docs) + 2)
    run = RankedRun.from_order("q", docs)
    seq = [gold.aspect_of.get(d) for d in docs]
    assert alpha_dcg(run, gold, aspects, alpha, k) == pytest.approx(
        float(alpha_dcg_mp(seq, aspects.weights, alpha, k)), abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(instances)
def test_recalls_monotone_and_single_aspect_binary(seed):
    rng = random.Random(seed)
    aspects, gold = make_instance(rng)
    docs = gold.doc_ids + [f"n{i}" for i in range(8)]
    rng.shuffle(docs)
    run = RankedRun.from_order("q", docs)
    prev_ar = prev_r = -1.0
    for k in range(1, len(docs) + 1):
        ar, r = a_recall(run, gold, aspects, k), recall_at_k(run, gold, k)
        assert ar >= prev_ar - 1e-15 and r >= prev_r
        prev_ar, prev_r = ar, r
    one = AspectSet.from_likert("q", [("a1", 4)])
    g1 = GoldAssignment("q", tuple((d, "a1") for d in gold.doc_ids))
    for k in range(1, len(docs) + 1):
        assert a_recall(run, g1, one, k) in (0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_non_gold_below_cutoff_irrelevant(seed):
    rng = random.Random(seed)
    aspects, gold = make_instance(rng)
    docs = gold.doc_ids + [f"n{i}" for i in range(6)]
    rng.shuffle(docs)
    k = rng.randint(1, len(docs))
    cfg = MetricConfig(cutoffs=(k,))
    tail_non_gold = [i for i in range(k, len(docs)) if docs[i] not in gold.aspect_of]
    if not tail_non_gold:
        return
    trimmed = docs[:tail_non_gold[0]] + docs[tail_non_gold[0] + 1:]
    a, b = RankedRun.from_order("q", docs), RankedRun.from_order("q", trimmed)
    assert alpha_ndcg(a, gold, aspects, cfg)[k] == alpha_ndcg(b, gold, aspects, cfg)[k]
    assert a_recall(a, gold, aspects, k) == a_recall(b, gold, aspects, k)


# evaluate_run

def _qrels(qid, mapping, likert=(("a1", 3),), subset=None):
    aspects = AspectSet.from_likert(qid, list(likert))
    return QueryQrels(aspects, GoldAssignment.from_mapping(qid, mapping), subset)


def test_evaluate_perfect_run():
    qrels = {"q1": _qrels("q1", {"d1": "a1", "d2": "a1"})}
    runs = {"q1": RankedRun.from_order("q1", ["d1", "d2"])}
    rep = evaluate_run(runs, qrels, MetricConfig(cutoffs=(25,)))
    assert rep.scaled("alpha_ndcg", 25) == 100.0
    assert "100.0" in rep.table()


def test_evaluate_macro_average():
    # q1: gold at rank 1 of 1 -> alpha-nDCG 1.0 ; q2 nothing -> 0.0 ; mean 50.0
    qrels = {"q1": _qrels("q1", {"d1": "a1"}), "q2": _qrels("q2", {"e1": "a1"})}
    runs = {"q1": RankedRun.from_order("q1", ["d1"]), "q2": RankedRun.from_order("q2", ["x"])}
    rep = evaluate_run(runs, qrels, MetricConfig(cutoffs=(5,)))
    assert rep.overall["alpha_ndcg"][5] == 0.5
    assert rep.scaled("alpha_ndcg", 5) == 50.0


def test_evaluate_subset_then_overall_macro():
    qrels = {
        "b1": _qrels("b1", {"d": "a1"}, subset="biology"),
        "b2": _qrels("b2", {"d": "a1"}, subset="biology"),
        "e1": _qrels("e1", {"d": "a1"}, subset="economics"),
    }
    runs = {q: RankedRun.from_order(q, ["d"]) for q in ("b1", "e1")}
    rep = evaluate_run(runs, qrels, MetricConfig(cutoffs=(5,)))
    assert rep.by_subset["biology"]["recall"][5] == 0.5
    assert rep.by_subset["economics"]["recall"][5] == 1.0
    assert rep.overall["recall"][5] == 0.75  # subset macro, not the 2/3 query micro


def test_evaluate_missing_qrels():
    with pytest.raises(MissingQrels) as err:
        evaluate_run({"zz": RankedRun("zz")}, {"q1": _qrels("q1", {"d": "a1"})})
    assert err.value.query_ids == ["zz"]


def test_evaluate_empty_gold_excluded():
    qrels = {"q1": _qrels("q1", {"d1": "a1"}), "q2": _qrels("q2", {})}
    runs = {"q1": RankedRun.from_order("q1", ["d1"]), "q2": RankedRun.from_order("q2", ["x"])}
    rep = evaluate_run(runs, qrels, MetricConfig(cutoffs=(5,)))
    assert rep.overall["alpha_ndcg"][5] == 1.0
    q2 = next(r for r in rep.per_query if r.query_id == "q2")
    assert FLAG_EMPTY_GOLD in q2.flags and q2.recall[5] is None


def test_evaluate_empty_run_set_warns():
    qrels = {"q1": _qrels("q1", {"d1": "a1"})}
    rep = evaluate_run({}, qrels, MetricConfig(cutoffs=(5,)))
    assert rep.scaled("alpha_ndcg", 5) == 0.0
    assert rep.warnings


def test_evaluate_workers_deterministic():
    rng = random.Random(3)
    qrels, runs = {}, {}
    for i in range(40):
        aspects, gold = make_instance(rng)
        qid = f"q{i}"
        aspects = AspectSet(qid, aspects.aspects)
        gold = GoldAssignment(qid, gold.entries)
        qrels[qid] = QueryQrels(aspects, gold, f"s{i % 3}")
        docs = gold.doc_ids + [f"n{j}" for j in range(10)]
        rng.shuffle(docs)
        runs[qid] = RankedRun.from_order(qid, docs)
    a = evaluate_run(runs, qrels, workers=1)
    b = evaluate_run(runs, qrels, workers=8)
    assert a.to_dict() == b.to_dict()
    assert [r.to_dict() for r in a.per_query] == [r.to_dict() for r in b.per_query]
