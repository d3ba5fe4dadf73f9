"""Domain types shared by every module, aspect-weight normalization and
gold-assignment validation.

All types are frozen dataclasses; constructing one checks its invariants, so
an instance that exists is valid (GoldAssignment is the exception: it is a
plain record and :func:`validate_gold` reports what is wrong with it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateAspect,
    EmptyAspectSet,
    InvalidLikert,
    QueryMismatch,
)

LIKERT_MIN = 1
LIKERT_MAX = 5
WEIGHT_TOL = 1e-9

__all__ = [
    "Aspect",
    "AspectSet",
    "GoldAssignment",
    "RankedRun",
    "MetricConfig",
    "ValidationReport",
    "QueryQrels",
    "normalize_weights",
    "validate_gold",
]


def _check_likert(score) -> int:
    if isinstance(score, bool) or not isinstance(score, int):
        raise InvalidLikert(f"Likert score must be an integer, got {score!r}")
    if not LIKERT_MIN <= score <= LIKERT_MAX:
        raise InvalidLikert(f"Likert score {score} outside [{LIKERT_MIN}, {LIKERT_MAX}]")
    return score


def normalize_weights(likert_scores: Sequence[int]) -> list[float]:
    """Turn 1..5 importance scores into weights that sum to one.

    >>> normalize_weights([5, 3, 2])
    [0.5, 0.3, 0.2]
    """
    scores = [_check_likert(s) for s in likert_scores]
    if not scores:
        raise EmptyAspectSet("cannot normalize an empty list of Likert scores")
    total = sum(scores)
    return [s / total for s in scores]


@dataclass(frozen=True)
class Aspect:
    aspect_id: str
    description: str
    likert: int
    weight: float


@dataclass(frozen=True)
class AspectSet:
    """A query's reasoning aspects, in annotation order."""

    query_id: str
    aspects: tuple[Aspect, ...]

    def __post_init__(self):
        object.__setattr__(self, "aspects", tuple(self.aspects))
        if not self.aspects:
            raise EmptyAspectSet(f"query {self.query_id!r} has no aspects")
        seen = set()
        for a in self.aspects:
            _check_likert(a.likert)
            if a.aspect_id in seen:
                raise DuplicateAspect(f"query {self.query_id!r}: aspect id {a.aspect_id!r} repeated")
            seen.add(a.aspect_id)
        expected = normalize_weights([a.likert for a in self.aspects])
        for a, w in zip(self.aspects, expected):
            if abs(a.weight - w) > WEIGHT_TOL:
                raise ValueError(
                    f"query {self.query_id!r}: aspect {a.aspect_id!r} weight {a.weight} "
                    f"does not match likert/sum = {w}"
                )

    @classmethod
    def from_likert(cls, query_id: str, items: Iterable) -> "AspectSet":
        """Build from ``(aspect_id, description, likert)`` triples or
        ``(aspect_id, likert)`` pairs; weights are always recomputed."""
        rows = []
        for item in items:
            if len(item) == 2:
                aid, likert = item
                desc = ""
            else:
                aid, desc, likert = item
            rows.append((str(aid), desc, likert))
        if not rows:
            raise EmptyAspectSet(f"query {query_id!r} has no aspects")
        weights = normalize_weights([r[2] for r in rows])
        return cls(query_id, tuple(Aspect(aid, desc, lk, w) for (aid, desc, lk), w in zip(rows, weights)))

    def __len__(self) -> int:
        return len(self.aspects)

    def __iter__(self):
        return iter(self.aspects)

    @property
    def ids(self) -> list[str]:
        return [a.aspect_id for a in self.aspects]

    @property
    def weights(self) -> dict[str, float]:
        return {a.aspect_id: a.weight for a in self.aspects}

    @property
    def likert(self) -> dict[str, int]:
        return {a.aspect_id: a.likert for a in self.aspects}


@dataclass(frozen=True)
class GoldAssignment:
    """Gold passages of one query, each tagged with the aspect it supports.

    Entries are kept as pairs so that duplicates survive construction and can
    be reported by :func:`validate_gold`.
    """

    query_id: str
    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(d), str(a)) for d, a in self.entries))

    @classmethod
    def from_mapping(cls, query_id: str, mapping: Mapping[str, str]) -> "GoldAssignment":
        return cls(query_id, tuple(mapping.items()))

    def __len__(self) -> int:
        return len(self.aspect_of)

    @property
    def aspect_of(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for doc_id, aspect_id in self.entries:
            out.setdefault(doc_id, aspect_id)
        return out

    @property
    def doc_ids(self) -> list[str]:
        return list(self.aspect_of)


@dataclass(frozen=True)
class RankedRun:
    """Ranked output for one query: ``(doc_id, score)`` by descending score,
    ties by ascending doc_id."""

    query_id: str
    items: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        items = tuple((str(d), float(s)) for d, s in self.items)
        object.__setattr__(self, "items", items)
        seen = set()
        for i, (doc_id, score) in enumerate(items):
            if doc_id in seen:
                raise ValueError(f"run {self.query_id!r}: doc {doc_id!r} appears twice")
            seen.add(doc_id)
            if math.isnan(score):
                raise ValueError(f"run {self.query_id!r}: NaN score for {doc_id!r}")
            if i:
                prev_doc, prev_score = items[i - 1]
                if score > prev_score or (score == prev_score and doc_id < prev_doc):
                    raise ValueError(
                        f"run {self.query_id!r}: items not in (score desc, doc_id asc) order "
                        f"at position {i + 1}"
                    )

    @classmethod
    def from_scores(cls, query_id: str, pairs: Iterable[tuple[str, float]]) -> "RankedRun":
        """Sort arbitrary ``(doc_id, score)`` pairs into canonical order."""
        pairs = [(str(d), float(s)) for d, s in pairs]
        pairs.sort(key=lambda p: (-p[1], p[0]))
        return cls(query_id, tuple(pairs))

    @classmethod
    def from_order(cls, query_id: str, doc_ids: Sequence[str]) -> "RankedRun":
        """Keep the given order, assigning synthetic scores n, n-1, ..., 1."""
        n = len(doc_ids)
        return cls(query_id, tuple((d, float(n - i)) for i, d in enumerate(doc_ids)))

    def __len__(self) -> int:
        return len(self.items)

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.items]

    def top(self, k: int) -> list[str]:
        return [d for d, _ in self.items[:k]]


@dataclass(frozen=True)
class MetricConfig:
    alpha: float = 0.5
    cutoffs: tuple[int, ...] = (5, 10, 15, 25)
    ideal: str = "greedy"

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", tuple(int(k) for k in self.cutoffs))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.cutoffs:
            raise ValueError("at least one cutoff is required")
        if any(k < 1 for k in self.cutoffs):
            raise ValueError(f"cutoffs must be positive, got {self.cutoffs}")
        if any(b <= a for a, b in zip(self.cutoffs, self.cutoffs[1:])):
            raise ValueError(f"cutoffs must be strictly increasing, got {self.cutoffs}")
        if self.ideal not in ("greedy", "exhaustive"):
            raise ValueError(f"ideal must be 'greedy' or 'exhaustive', got {self.ideal!r}")


@dataclass(frozen=True)
class ValidationReport:
    query_id: str
    dangling: tuple[tuple[str, str], ...] = ()
    duplicates: tuple[str, ...] = ()
    uncovered: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        """True when there are no errors; uncovered aspects are only warnings."""
        return not self.dangling and not self.duplicates

    @property
    def is_empty(self) -> bool:
        return self.ok and not self.uncovered

    def messages(self) -> list[str]:
        out = [f"gold doc {d!r} references unknown aspect {a!r}" for d, a in self.dangling]
        out += [f"gold doc {d!r} listed more than once" for d in self.duplicates]
        out += [f"aspect {a!r} has no gold documents (warning)" for a in self.uncovered]
        return out


def validate_gold(gold: GoldAssignment, aspects: AspectSet) -> ValidationReport:
    if gold.query_id != aspects.query_id:
        raise QueryMismatch(f"gold is for {gold.query_id!r}, aspects for {aspects.query_id!r}")
    known = set(aspects.ids)
    dangling = tuple((d, a) for d, a in gold.entries if a not in known)
    counts: dict[str, int] = {}
    for d, _ in gold.entries:
        counts[d] = counts.get(d, 0) + 1
    duplicates = tuple(d for d, c in counts.items() if c > 1)
    covered = {a for _, a in gold.entries}
    uncovered = tuple(a for a in aspects.ids if a not in covered)
    return ValidationReport(gold.query_id, dangling, duplicates, uncovered)


@dataclass(frozen=True)
class QueryQrels:
    """Everything needed to score one query."""

    aspects: AspectSet
    gold: GoldAssignment
    subset: str | None = None
    query: str = ""
    # synthetic gold doc id -> source doc id, for passages split across aspects
    provenance: Mapping[str, str] = field(default_factory=dict)

    @property
    def query_id(self) -> str:
        return self.aspects.query_id
