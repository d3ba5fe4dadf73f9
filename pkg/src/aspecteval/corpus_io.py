"""Readers and writers for every on-disk artifact.

Formats (all UTF-8, LF line endings):

corpus (JSONL)
    one object per line with string fields ``id`` and ``contents``.

aspect qrels (JSONL)
    one object per query::

        {"query_id": "bio-12", "subset": "biology", "query": "...",
         "aspects": [{"id": "a1", "description": "...", "likert": 4}, ...],
         "gold": [{"doc_id": "d7", "aspect_id": "a1"}, ...]}

    ``aspects[].weight`` may be present; it is checked against the Likert
    scores and otherwise ignored. A gold entry may carry ``aspect_ids`` (a
    list) instead of ``aspect_id``; it is split into one entry per aspect, the
    first keeping the original doc id and the rest getting ``<doc_id>#<aspect>``
    ids recorded in the query's provenance map.

run file
    whitespace-separated ``query_id Q0 doc_id rank score tag`` rows; ranks
    strictly increase within a query. Written with scores at 6 decimals,
    queries in sorted order, documents in canonical (score desc, doc_id asc)
    order of the rounded scores.

trace (JSONL)
    a ``header`` record (format name and version), one ``round`` record per
    search round, ``event`` records, then a ``final`` record.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .core import WEIGHT_TOL, AspectSet, GoldAssignment, QueryQrels, RankedRun, normalize_weights, validate_gold
from .errors import (
    AspectEvalError,
    InvalidGold,
    IoError,
    RankOrderError,
    SchemaError,
    TraceVersionError,
)
from .harness.types import AnswerAction, RetrievedDoc, RoundRecord, SearchTrace

log = logging.getLogger(__name__)

SUPPLIED_WEIGHT_TOL = 1e-6
TRACE_FORMAT = "aspecteval-trace"
TRACE_VERSION = 1
SCORE_DECIMALS = 6


def _open_text(path):
    try:
        return open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _jsonl(path) -> Iterator[tuple[int, dict]]:
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", path=path, line=lineno) from exc
            if not isinstance(rec, dict):
                raise SchemaError("record is not a JSON object", path=path, line=lineno)
            yield lineno, rec


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


# corpus

def load_corpus(path) -> Iterator[tuple[str, str]]:
    for lineno, rec in _jsonl(path):
        for key in ("id", "contents"):
            if key not in rec:
                raise SchemaError(f"missing field {key!r}", path=path, line=lineno)
        if not isinstance(rec["contents"], str):
            raise SchemaError("field 'contents' must be a string", path=path, line=lineno)
        yield str(rec["id"]), rec["contents"]


def write_corpus(docs: Iterable[tuple[str, str]], path) -> None:
    _atomic_write(path, "".join(_dumps({"id": d, "contents": t}) + "\n" for d, t in docs))


# queries and qrels

@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    query: str
    subset: str | None = None


def load_queries(path) -> list[QueryRecord]:
    """Read ``query_id`` / ``query`` (or ``text``) / optional ``subset`` records.

    Qrels files qualify, since they carry the query text too.
    """
    out, seen = [], set()
    for lineno, rec in _jsonl(path):
        if "query_id" not in rec:
            raise SchemaError("missing field 'query_id'", path=path, line=lineno)
        text = rec.get("query", rec.get("text"))
        if not isinstance(text, str):
            raise SchemaError("missing string field 'query'", path=path, line=lineno)
        qid = str(rec["query_id"])
        if qid in seen:
            raise SchemaError(f"query id {qid!r} repeated", path=path, line=lineno)
        seen.add(qid)
        out.append(QueryRecord(qid, text, rec.get("subset")))
    return out


class AspectQrels(Mapping):
    """Read-only ``query_id -> QueryQrels`` map, in file order."""

    def __init__(self, queries: Iterable[QueryQrels] = ()):
        self._q: dict[str, QueryQrels] = {}
        for q in queries:
            if q.query_id in self._q:
                raise SchemaError(f"query id {q.query_id!r} repeated")
            self._q[q.query_id] = q

    def __getitem__(self, qid):
        return self._q[qid]

    def __iter__(self):
        return iter(self._q)

    def __len__(self):
        return len(self._q)

    @property
    def subsets(self) -> list[str]:
        return sorted({q.subset or "all" for q in self._q.values()})

    def stats(self) -> dict:
        n = len(self._q)
        return {
            "queries": n,
            "mean_aspects": sum(len(q.aspects) for q in self._q.values()) / n if n else 0.0,
            "mean_gold": sum(len(q.gold) for q in self._q.values()) / n if n else 0.0,
        }


def _parse_qrels_record(rec: dict, path, lineno: int) -> QueryQrels:
    for key in ("query_id", "aspects", "gold"):
        if key not in rec:
            raise SchemaError(f"missing field {key!r}", path=path, line=lineno)
    qid = str(rec["query_id"])
    rows = []
    for a in rec["aspects"]:
        if not isinstance(a, dict) or "id" not in a or "likert" not in a:
            raise SchemaError("aspect entries need 'id' and 'likert'", path=path, line=lineno)
        rows.append((str(a["id"]), a.get("description", ""), a["likert"]))
    try:
        aspects = AspectSet.from_likert(qid, rows)
    except (AspectEvalError, ValueError) as exc:
        raise SchemaError(f"query {qid!r}: {exc}", path=path, line=lineno) from exc

    supplied = [a.get("weight") for a in rec["aspects"]]
    if any(w is not None for w in supplied):
        for aspect, w in zip(aspects, supplied):
            if w is not None and abs(float(w) - aspect.weight) > SUPPLIED_WEIGHT_TOL:
                log.warning("%s:%d: query %s aspect %s: supplied weight %s differs from likert-derived %.6f",
                            path, lineno, qid, aspect.aspect_id, w, aspect.weight)

    entries, provenance = [], {}
    for g in rec["gold"]:
        if not isinstance(g, dict) or "doc_id" not in g:
            raise SchemaError("gold entries need 'doc_id'", path=path, line=lineno)
        doc_id = str(g["doc_id"])
        if "aspect_ids" in g:
            targets = [str(a) for a in g["aspect_ids"]]
        elif "aspect_id" in g:
            targets = [str(g["aspect_id"])]
        else:
            raise SchemaError(f"gold doc {doc_id!r} has no aspect", path=path, line=lineno)
        if not targets:
            raise SchemaError(f"gold doc {doc_id!r} has an empty aspect list", path=path, line=lineno)
        entries.append((doc_id, targets[0]))
        for extra in targets[1:]:
            synthetic = f"{doc_id}#{extra}"
            entries.append((synthetic, extra))
            provenance[synthetic] = doc_id
        if len(targets) > 1:
            log.warning("%s:%d: gold doc %s supports %d aspects; split into synthetic ids",
                        path, lineno, doc_id, len(targets))
    gold = GoldAssignment(qid, tuple(entries))
    report = validate_gold(gold, aspects)
    if not report.ok:
        raise InvalidGold(f"{path}:{lineno}: " + "; ".join(report.messages()))
    for msg in report.messages():
        log.info("%s:%d: query %s: %s", path, lineno, qid, msg)
    return QueryQrels(aspects, gold, rec.get("subset"), rec.get("query", ""), provenance)


def load_aspect_qrels(path) -> AspectQrels:
    out: list[QueryQrels] = []
    seen: set[str] = set()
    for lineno, rec in _jsonl(path):
        q = _parse_qrels_record(rec, path, lineno)
        if q.query_id in seen:
            raise SchemaError(f"query id {q.query_id!r} repeated", path=path, line=lineno)
        seen.add(q.query_id)
        out.append(q)
    return AspectQrels(out)


def qrels_record(q: QueryQrels) -> dict:
    """Canonical record for one query; synthetic split entries fold back into ``aspect_ids``."""
    gold: dict[str, list[str]] = {}
    for doc_id, aspect_id in q.gold.entries:
        gold.setdefault(q.provenance.get(doc_id, doc_id), []).append(aspect_id)
    return {
        "query_id": q.query_id,
        "subset": q.subset,
        "query": q.query,
        "aspects": [{"id": a.aspect_id, "description": a.description, "likert": a.likert,
                     "weight": a.weight} for a in q.aspects],
        "gold": [{"doc_id": d, "aspect_id": a[0]} if len(a) == 1 else {"doc_id": d, "aspect_ids": a}
                 for d, a in gold.items()],
    }


def write_aspect_qrels(qrels: Mapping[str, QueryQrels], path) -> None:
    _atomic_write(path, "".join(_dumps(qrels_record(q)) + "\n" for q in qrels.values()))


# run files

def read_run_file(path) -> dict[str, RankedRun]:
    rows: dict[str, list[tuple[str, float]]] = {}
    last_rank: dict[str, int] = {}
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise SchemaError(f"expected 6 columns, got {len(parts)}", path=path, line=lineno)
            qid, q0, doc_id, rank, score, _tag = parts
            if q0 != "Q0":
                raise SchemaError(f"second column must be 'Q0', got {q0!r}", path=path, line=lineno)
            try:
                rank_i, score_f = int(rank), float(score)
            except ValueError as exc:
                raise SchemaError(f"bad rank or score: {exc}", path=path, line=lineno) from exc
            if qid in last_rank and rank_i <= last_rank[qid]:
                raise RankOrderError(f"query {qid}: rank {rank_i} after rank {last_rank[qid]}",
                                     path=path, line=lineno)
            last_rank[qid] = rank_i
            rows.setdefault(qid, []).append((doc_id, score_f))
    runs = {}
    for qid, pairs in rows.items():
        if len({d for d, _ in pairs}) != len(pairs):
            raise SchemaError(f"query {qid}: duplicate doc ids", path=path)
        runs[qid] = RankedRun.from_scores(qid, pairs)
    return runs


def format_run(runs: Mapping[str, RankedRun] | Iterable[RankedRun], tag: str = "aspecteval") -> str:
    if not isinstance(runs, Mapping):
        runs = {r.query_id: r for r in runs}
    if any(c.isspace() for c in tag) or not tag:
        raise ValueError(f"run tag must be a non-empty token, got {tag!r}")
    lines = []
    for qid in sorted(runs):
        run = runs[qid]
        items = sorted(((d, round(s, SCORE_DECIMALS)) for d, s in run.items), key=lambda p: (-p[1], p[0]))
        for rank, (doc_id, score) in enumerate(items, start=1):
            if not doc_id or any(c.isspace() for c in doc_id) or any(c.isspace() for c in qid):
                raise ValueError(f"ids may not contain whitespace: {qid!r} / {doc_id!r}")
            if score == 0:
                score = 0.0  # no "-0.000000"
            lines.append(f"{qid} Q0 {doc_id} {rank} {score:.{SCORE_DECIMALS}f} {tag}\n")
    return "".join(lines)


def write_run_file(runs, path, tag: str = "aspecteval") -> None:
    _atomic_write(path, format_run(runs, tag))


# traces

def _trace_records(trace: SearchTrace) -> list[dict]:
    recs = [{"type": "header", "format": TRACE_FORMAT, "version": TRACE_VERSION,
             "query_id": trace.query_id, "query": trace.query, "mode": trace.mode}]
    for rnd in trace.rounds:
        recs.append({
            "type": "round",
            "round": rnd.number,
            "query": rnd.query,
            "results": [{"doc_id": d.doc_id, "score": d.score, "snippet": d.snippet, "truncated": d.truncated}
                        for d in rnd.results],
            "answer": None if rnd.answer is None else {"text": rnd.answer.text,
                                                       "confidence": rnd.answer.confidence},
        })
    for ev in trace.events:
        recs.append({"type": "event", "event": ev})
    if trace.stop_reason is not None:
        recs.append({"type": "final", "stop_reason": trace.stop_reason, "answer": trace.final_answer,
                     "confidence": trace.confidence})
    return recs


def format_trace(trace: SearchTrace) -> str:
    return "".join(_dumps(r) + "\n" for r in _trace_records(trace))


def write_trace(trace: SearchTrace, path) -> None:
    _atomic_write(path, format_trace(trace))


def read_trace(path) -> SearchTrace:
    trace = None
    for lineno, rec in _jsonl(path):
        kind = rec.get("type")
        if trace is None:
            if kind != "header" or rec.get("format") != TRACE_FORMAT:
                raise SchemaError("first record must be a trace header", path=path, line=lineno)
            if rec.get("version") != TRACE_VERSION:
                raise TraceVersionError(f"{path}: trace version {rec.get('version')!r}, "
                                        f"this reader handles {TRACE_VERSION}")
            trace = SearchTrace(query_id=rec["query_id"], query=rec["query"], mode=rec["mode"])
        elif kind == "round":
            try:
                ans = rec.get("answer")
                trace.rounds.append(RoundRecord(
                    number=rec["round"],
                    query=rec["query"],
                    results=tuple(RetrievedDoc(r["doc_id"], r["score"], r["snippet"], r["truncated"])
                                  for r in rec["results"]),
                    answer=None if ans is None else AnswerAction(ans["text"], ans.get("confidence")),
                ))
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"malformed round record: {exc}", path=path, line=lineno) from exc
        elif kind == "event":
            trace.events.append(rec["event"])
        elif kind == "final":
            trace.stop_reason = rec["stop_reason"]
            trace.final_answer = rec.get("answer")
            trace.confidence = rec.get("confidence")
        else:
            raise SchemaError(f"unknown record type {kind!r}", path=path, line=lineno)
    if trace is None:
        raise SchemaError("empty trace file", path=path)
    return trace
