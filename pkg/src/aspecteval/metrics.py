"""Static retrieval metrics over aspect-annotated gold sets.

Four measures are computed per query and cutoff ``k``:

* alpha-nDCG@k: each gold document contributes the weight of its aspect,
  discounted by ``(1 - alpha) ** c`` where ``c`` is the number of gold
  documents of the same aspect ranked above it, then by ``1 / log2(r + 1)``.
  The normaliser is the same sum over a greedily built ideal ranking.
* A-Recall@k: total weight of the aspects hit at least once in the top k.
* Recall@k and NDCG@k with binary relevance, ignoring aspects.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .core import AspectSet, GoldAssignment, MetricConfig, RankedRun
from .errors import MissingQrels, OracleTooLarge, RankOutOfRange, ZeroGold, ZeroIdeal

log = logging.getLogger(__name__)

METRICS = ("alpha_ndcg", "a_recall", "recall", "ndcg")
EXHAUSTIVE_MAX_GOLD = 10
# slack for "alpha-nDCG above 1" diagnostics; pure float noise stays below it
ABOVE_ONE_TOL = 1e-12

FLAG_EMPTY_GOLD = "empty-gold"
FLAG_ABOVE_ONE = "alpha-ndcg-above-one"
FLAG_EMPTY_RUN = "empty-run"


def _discount(rank: int) -> float:
    return math.log2(rank + 1)


def _sequence_dcg(aspect_seq: Iterable[str | None], weights: Mapping[str, float], alpha: float) -> float:
    """alpha-DCG of a sequence of aspect labels (None = non-gold).

    Both the run-side DCG and every ideal computation go through here so that
    a run ordered exactly like the ideal reproduces it bit for bit.
    """
    counts: dict[str, int] = {}
    total = 0.0
    for rank, aspect in enumerate(aspect_seq, start=1):
        if aspect is None:
            continue
        c = counts.get(aspect, 0)
        total += weights[aspect] * (1.0 - alpha) ** c / _discount(rank)
        counts[aspect] = c + 1
    return total


def _aspect_sequence(run: RankedRun, gold: GoldAssignment, k: int) -> list[str | None]:
    aspect_of = gold.aspect_of
    return [aspect_of.get(d) for d in run.top(k)]


def coverage_state(run: RankedRun, gold: GoldAssignment, aspects: AspectSet, k: int) -> dict[str, int]:
    """Per-aspect count of gold documents in the top ``k``."""
    counts = {a: 0 for a in aspects.ids}
    for aspect in _aspect_sequence(run, gold, k):
        if aspect is not None:
            counts[aspect] += 1
    return counts


def aspect_gain(rank_position: int, run: RankedRun, gold: GoldAssignment, aspects: AspectSet,
                alpha: float = 0.5) -> float:
    if not 1 <= rank_position <= len(run):
        raise RankOutOfRange(f"rank {rank_position} outside 1..{len(run)}")
    seq = _aspect_sequence(run, gold, rank_position)
    aspect = seq[-1]
    if aspect is None:
        return 0.0
    seen_before = sum(1 for a in seq[:-1] if a == aspect)
    return aspects.weights[aspect] * (1.0 - alpha) ** seen_before


def alpha_dcg(run: RankedRun, gold: GoldAssignment, aspects: AspectSet, alpha: float, k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return _sequence_dcg(_aspect_sequence(run, gold, k), aspects.weights, alpha)


def greedy_ideal_order(gold: GoldAssignment, aspects: AspectSet, alpha: float, k: int) -> list[str]:
    """Gold documents in greedy ideal order, at most ``k`` of them.

    At each position the unplaced document with the largest incremental gain
    wins; equal gains go to the smaller doc_id.
    """
    weights = aspects.weights
    remaining = sorted(gold.aspect_of.items())
    counts: dict[str, int] = {}
    order: list[str] = []
    while remaining and len(order) < k:
        best_i, best_gain = 0, -1.0
        for i, (_, aspect) in enumerate(remaining):
            g = weights[aspect] * (1.0 - alpha) ** counts.get(aspect, 0)
            if g > best_gain:
                best_i, best_gain = i, g
        doc_id, aspect = remaining.pop(best_i)
        counts[aspect] = counts.get(aspect, 0) + 1
        order.append(doc_id)
    return order


def ideal_alpha_dcg_greedy(gold: GoldAssignment, aspects: AspectSet, alpha: float, k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not gold.entries:
        raise ZeroIdeal(f"query {gold.query_id!r} has no gold documents")
    aspect_of = gold.aspect_of
    order = greedy_ideal_order(gold, aspects, alpha, k)
    return _sequence_dcg((aspect_of[d] for d in order), aspects.weights, alpha)


def _multiset_sequences(counts: dict[str, int], length: int) -> Iterator[list[str]]:
    labels = sorted(counts)
    seq: list[str] = []

    def rec():
        if len(seq) == length:
            yield list(seq)
            return
        for a in labels:
            if counts[a]:
                counts[a] -= 1
                seq.append(a)
                yield from rec()
                seq.pop()
                counts[a] += 1

    yield from rec()


def ideal_alpha_dcg_exhaustive(gold: GoldAssignment, aspects: AspectSet, alpha: float, k: int,
                               max_gold: int = EXHAUSTIVE_MAX_GOLD) -> float:
    """True maximum of alpha-DCG@k over every ordering of the gold pool.

    Test oracle only. Gold documents of the same aspect are interchangeable
    for the gain, so enumerating every distinct sequence of aspect labels
    visits every attainable DCG value.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    aspect_of = gold.aspect_of
    if not aspect_of:
        raise ZeroIdeal(f"query {gold.query_id!r} has no gold documents")
    if len(aspect_of) > max_gold:
        raise OracleTooLarge(f"{len(aspect_of)} gold documents exceeds the oracle limit of {max_gold}")
    counts: dict[str, int] = {}
    for a in aspect_of.values():
        counts[a] = counts.get(a, 0) + 1
    weights = aspects.weights
    length = min(k, len(aspect_of))
    return max(_sequence_dcg(seq, weights, alpha) for seq in _multiset_sequences(counts, length))


@dataclass(frozen=True)
class AlphaNDCG:
    """Per-cutoff alpha-nDCG with the pieces it was built from."""

    values: dict[int, float]
    dcg: dict[int, float]
    idcg: dict[int, float]
    ideal_method: str
    flags: frozenset[str] = frozenset()

    def __getitem__(self, k: int) -> float:
        return self.values[k]


def alpha_ndcg(run: RankedRun, gold: GoldAssignment, aspects: AspectSet,
               config: MetricConfig | None = None) -> AlphaNDCG:
    config = config or MetricConfig()
    dcg = {k: alpha_dcg(run, gold, aspects, config.alpha, k) for k in config.cutoffs}
    if not gold.entries:
        zeros = {k: 0.0 for k in config.cutoffs}
        return AlphaNDCG(zeros, dcg, dict(zeros), config.ideal, frozenset({FLAG_EMPTY_GOLD}))
    ideal_fn = ideal_alpha_dcg_greedy if config.ideal == "greedy" else ideal_alpha_dcg_exhaustive
    idcg = {k: ideal_fn(gold, aspects, config.alpha, k) for k in config.cutoffs}
    values = {k: dcg[k] / idcg[k] for k in config.cutoffs}
    flags = set()
    if any(v > 1.0 + ABOVE_ONE_TOL for v in values.values()):
        flags.add(FLAG_ABOVE_ONE)
        log.warning("query %s: alpha-nDCG above 1 with %s ideal: %s", run.query_id, config.ideal, values)
    return AlphaNDCG(values, dcg, idcg, config.ideal, frozenset(flags))


def a_recall(run: RankedRun, gold: GoldAssignment, aspects: AspectSet, k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hit = {a for a in _aspect_sequence(run, gold, k) if a is not None}
    return sum(a.weight for a in aspects if a.aspect_id in hit)


def recall_at_k(run: RankedRun, gold: GoldAssignment, k: int) -> float:
    pool = gold.aspect_of
    if not pool:
        raise ZeroGold(f"query {gold.query_id!r} has no gold documents")
    found = sum(1 for d in run.top(k) if d in pool)
    return found / len(pool)


def ndcg_at_k(run: RankedRun, gold: GoldAssignment, k: int) -> float:
    pool = gold.aspect_of
    if not pool:
        raise ZeroGold(f"query {gold.query_id!r} has no gold documents")
    dcg = sum(1.0 / _discount(r) for r, d in enumerate(run.top(k), start=1) if d in pool)
    idcg = sum(1.0 / _discount(r) for r in range(1, min(k, len(pool)) + 1))
    return dcg / idcg


@dataclass(frozen=True)
class MetricReport:
    query_id: str
    subset: str | None
    alpha_ndcg: dict[int, float]
    a_recall: dict[int, float]
    recall: dict[int, float | None]
    ndcg: dict[int, float | None]
    dcg: dict[int, float]
    idcg: dict[int, float]
    ideal_method: str = "greedy"
    flags: tuple[str, ...] = ()

    def value(self, metric: str, k: int) -> float | None:
        return getattr(self, metric)[k]

    def to_dict(self) -> dict:
        def keyed(d):
            return {str(k): v for k, v in d.items()}

        return {
            "query_id": self.query_id,
            "subset": self.subset,
            **{m: keyed(getattr(self, m)) for m in METRICS},
            "dcg": keyed(self.dcg),
            "idcg": keyed(self.idcg),
            "ideal_method": self.ideal_method,
            "flags": list(self.flags),
        }


def evaluate_query(run: RankedRun, aspects: AspectSet, gold: GoldAssignment,
                   config: MetricConfig | None = None, subset: str | None = None) -> MetricReport:
    config = config or MetricConfig()
    an = alpha_ndcg(run, gold, aspects, config)
    flags = set(an.flags)
    if len(run) == 0:
        flags.add(FLAG_EMPTY_RUN)
    empty = FLAG_EMPTY_GOLD in flags
    return MetricReport(
        query_id=run.query_id,
        subset=subset,
        alpha_ndcg=dict(an.values),
        a_recall={k: a_recall(run, gold, aspects, k) for k in config.cutoffs},
        recall={k: None if empty else recall_at_k(run, gold, k) for k in config.cutoffs},
        ndcg={k: None if empty else ndcg_at_k(run, gold, k) for k in config.cutoffs},
        dcg=dict(an.dcg),
        idcg=dict(an.idcg),
        ideal_method=config.ideal,
        flags=tuple(sorted(flags)),
    )


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass
class EvaluationReport:
    """Per-query reports plus unweighted macro-averages.

    Aggregates are kept on the 0..1 scale; :meth:`scaled` and :meth:`table`
    give the x100 display values.
    """

    config: MetricConfig
    per_query: list[MetricReport]
    by_subset: dict[str, dict[str, dict[int, float | None]]]
    overall: dict[str, dict[int, float | None]]
    warnings: list[str] = field(default_factory=list)

    def scaled(self, metric: str, k: int, subset: str | None = None) -> float | None:
        src = self.overall if subset is None else self.by_subset[subset]
        v = src[metric][k]
        return None if v is None else round(100.0 * v, 1)

    def to_dict(self) -> dict:
        def keyed(d):
            return {m: {str(k): v for k, v in per_k.items()} for m, per_k in d.items()}

        return {
            "alpha": self.config.alpha,
            "cutoffs": list(self.config.cutoffs),
            "ideal_method": self.config.ideal,
            "queries": len(self.per_query),
            "overall": keyed(self.overall),
            "by_subset": {s: keyed(v) for s, v in self.by_subset.items()},
            "warnings": list(self.warnings),
        }

    def table(self, metrics: Sequence[str] = METRICS) -> str:
        cols = [(m, k) for m in metrics for k in self.config.cutoffs]
        header = ["subset"] + [f"{m}@{k}" for m, k in cols]
        rows = []
        for name in sorted(self.by_subset):
            rows.append([name] + [_fmt(self.scaled(m, k, name)) for m, k in cols])
        rows.append(["Overall"] + [_fmt(self.scaled(m, k)) for m, k in cols])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
                 for r in [header] + rows]
        return "\n".join(lines) + "\n"


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{v:.1f}"


def evaluate_run(runs: Mapping[str, RankedRun] | Iterable[RankedRun], qrels: Mapping,
                 config: MetricConfig | None = None, workers: int = 1) -> EvaluationReport:
    """Evaluate runs against aspect qrels.

    ``qrels`` maps query_id to an object with ``aspects``, ``gold`` and
    ``subset`` attributes. Queries present in the qrels but absent from the
    runs are scored as empty runs.
    """
    config = config or MetricConfig()
    if not isinstance(runs, Mapping):
        runs = {r.query_id: r for r in runs}
    missing = [qid for qid in runs if qid not in qrels]
    if missing:
        raise MissingQrels(missing)

    warnings = []
    qids = sorted(qrels)
    if not runs:
        warnings.append("empty run: every query scored as an empty ranking")
    else:
        absent = [q for q in qids if q not in runs]
        if absent:
            warnings.append(f"{len(absent)} queries without a run scored as empty rankings")

    def one(qid):
        q = qrels[qid]
        run = runs.get(qid) or RankedRun(qid)
        return evaluate_query(run, q.aspects, q.gold, config, q.subset)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_query = list(pool.map(one, qids))
    else:
        per_query = [one(q) for q in qids]

    groups: dict[str, list[MetricReport]] = {}
    for rep in per_query:
        groups.setdefault(rep.subset or "all", []).append(rep)

    by_subset = {}
    for name, reps in groups.items():
        usable = [r for r in reps if FLAG_EMPTY_GOLD not in r.flags]
        by_subset[name] = {
            m: {k: _mean([v for r in usable if (v := r.value(m, k)) is not None]) for k in config.cutoffs}
            for m in METRICS
        }
    overall = {
        m: {k: _mean([v for s in by_subset.values() if (v := s[m][k]) is not None]) for k in config.cutoffs}
        for m in METRICS
    }
    for w in warnings:
        log.warning(w)
    return EvaluationReport(config, per_query, by_subset, overall, warnings)
