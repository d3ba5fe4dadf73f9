"""Judge verdicts: parsing, reasoning completeness, AER and agentic reports."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .core import AspectSet
from .errors import IncompleteVerdict, InvalidRounds, InvalidScore, JudgeParseError, MissingVerdict

ASPECT_SCORES = (0.0, 0.5, 1.0)
DEFAULT_GAMMA = 0.05

_FENCE_RE = re.compile(r"```(?:json|JSON)?\s*(.*?)```", re.S)


@dataclass(frozen=True)
class JudgeVerdict:
    query_id: str
    aspect_scores: dict[str, float]
    overall_quality: int
    justification: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "aspect_scores": self.aspect_scores,
            "overall_quality": self.overall_quality,
            "justification": self.justification,
        }, ensure_ascii=False)


def _extract_object(raw: str) -> dict:
    text = (raw or "").strip()
    candidates = [text]
    candidates += [m.strip() for m in _FENCE_RE.findall(text)]
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        candidates.append(text[start:end + 1])
    for cand in candidates:
        try:
            obj = json.loads(cand)
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj
    raise JudgeParseError(f"no JSON object found in judge output: {text[:200]!r}")


def _score(value, aspect_id: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidScore(f"aspect {aspect_id!r}: score {value!r} is not a number")
    if float(value) not in ASPECT_SCORES:
        raise InvalidScore(f"aspect {aspect_id!r}: score {value!r} not in {{0, 0.5, 1}}")
    return float(value)


def verdict_from_dict(obj: Mapping, aspects: AspectSet) -> JudgeVerdict:
    scores = obj.get("aspect_scores")
    if not isinstance(scores, dict):
        raise JudgeParseError("'aspect_scores' must be an object")
    missing = [a for a in aspects.ids if a not in scores]
    if missing:
        raise IncompleteVerdict(f"query {aspects.query_id!r}: no score for aspects {missing}")
    unknown = sorted(set(scores) - set(aspects.ids))
    if unknown:
        raise InvalidScore(f"query {aspects.query_id!r}: scores for unknown aspects {unknown}")
    oq = obj.get("overall_quality")
    if isinstance(oq, bool) or not isinstance(oq, (int, float)) or oq != int(oq) or not 1 <= oq <= 5:
        raise InvalidScore(f"overall_quality must be an integer 1..5, got {oq!r}")
    just = obj.get("justification", "")
    return JudgeVerdict(
        query_id=aspects.query_id,
        aspect_scores={a: _score(scores[a], a) for a in aspects.ids},
        overall_quality=int(oq),
        justification=just if isinstance(just, str) else str(just),
    )


def parse_judge_output(raw: str, aspects: AspectSet) -> JudgeVerdict:
    """Parse a judge reply, tolerating code fences or prose around the object."""
    return verdict_from_dict(_extract_object(raw), aspects)


def weighted_coverage(verdict: JudgeVerdict, aspects: AspectSet) -> Fraction:
    """Likert-weighted mean coverage, exact."""
    total = sum(a.likert for a in aspects)
    return sum((Fraction(a.likert, total) * Fraction(verdict.aspect_scores[a.aspect_id])
                for a in aspects), Fraction(0))


def reasoning_completeness(verdict: JudgeVerdict, aspects: AspectSet) -> int:
    """round(4 * wbar + 1) with halves rounded up; always in 1..5."""
    missing = [a for a in aspects.ids if a not in verdict.aspect_scores]
    if missing:
        raise IncompleteVerdict(f"query {aspects.query_id!r}: no score for aspects {missing}")
    x = 4 * weighted_coverage(verdict, aspects) + 1
    return math.floor(x + Fraction(1, 2))


def aer(overall_quality: float, rounds: int, gamma: float = DEFAULT_GAMMA) -> float:
    """Quality discounted by exp(-gamma * (rounds - 1))."""
    if isinstance(rounds, bool) or int(rounds) != rounds or rounds < 1:
        raise InvalidRounds(f"rounds must be an integer >= 1, got {rounds!r}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return overall_quality * math.exp(-gamma * (rounds - 1))


@dataclass(frozen=True)
class AgenticRow:
    query_id: str
    rounds: int
    completeness: int
    overall_quality: int
    aer: float

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "rounds": self.rounds, "completeness": self.completeness,
                "overall_quality": self.overall_quality, "aer": self.aer}


@dataclass
class AgenticReport:
    rows: list[AgenticRow]
    gamma: float = DEFAULT_GAMMA
    label: str = ""
    means: dict[str, float] = field(init=False)

    def __post_init__(self):
        n = len(self.rows)
        keys = ("rounds", "completeness", "overall_quality", "aer")
        # AER is averaged per query, never recomputed from the other means
        self.means = {k: (sum(getattr(r, k) for r in self.rows) / n if n else math.nan) for k in keys}

    def to_dict(self) -> dict:
        return {"label": self.label, "gamma": self.gamma, "queries": len(self.rows),
                "means": self.means, "rows": [r.to_dict() for r in self.rows]}

    def table(self) -> str:
        head = f"{'query_id':<20} {'#R':>6} {'Compl.':>7} {'Overall':>8} {'AER':>7}"
        lines = [head]
        for r in self.rows:
            lines.append(f"{r.query_id:<20} {r.rounds:>6d} {r.completeness:>7d} {r.overall_quality:>8d} {r.aer:>7.2f}")
        m = self.means
        lines.append(f"{'mean':<20} {m['rounds']:>6.2f} {m['completeness']:>7.2f} "
                     f"{m['overall_quality']:>8.2f} {m['aer']:>7.2f}")
        return "\n".join(lines) + "\n"


def aggregate_agentic_report(verdicts: Mapping[str, JudgeVerdict], traces: Mapping, aspects: Mapping[str, AspectSet],
                             gamma: float = DEFAULT_GAMMA, rounds_override: Mapping[str, int] | None = None,
                             label: str = "") -> AgenticReport:
    """One row per traced query. ``traces`` values need ``num_rounds``;
    ``rounds_override`` replaces it (e.g. a fixed-round checkpoint)."""
    rows = []
    for qid in sorted(traces):
        if qid not in verdicts:
            raise MissingVerdict(qid)
        v = verdicts[qid]
        r = rounds_override[qid] if rounds_override and qid in rounds_override else traces[qid].num_rounds
        rows.append(AgenticRow(qid, r, reasoning_completeness(v, aspects[qid]), v.overall_quality,
                               aer(v.overall_quality, r, gamma)))
    return AgenticReport(rows, gamma, label)


def aspects_block(aspects: AspectSet) -> str:
    return "\n".join(f"- {a.aspect_id}: {a.description}, w={a.likert}" for a in aspects)


JUDGE_SYSTEM = """\
You grade an answer written by a research assistant.

You get a QUESTION, REASONING_ASPECTS (the rubric: one short id per aspect, \
each with its importance), a REFERENCE_ANSWER built from gold evidence, and \
the SYSTEM_ANSWER to grade.

1. Give every aspect id a coverage score: 1 if the system answer handles it \
fully with specific, well-supported claims; 0.5 if it is touched on only \
shallowly, with errors, or without a key detail; 0 if it is missing, off \
topic or wrong. Every aspect id must receive a score.
2. Give one overall_quality integer from 1 to 5 comparing the system answer \
with the reference: 5 as good or better, 4 a little weaker but correct and \
well organised, 3 correct but thinner or less clear, 2 partly correct with \
real problems, 1 mostly wrong or invented.

Reply with one JSON object and nothing else:
{"aspect_scores": {"a1": 0|0.5|1, ...}, "overall_quality": 1-5, "justification": "<one or two sentences>"}"""

JUDGE_USER = """\
QUESTION:
{question}

REASONING_ASPECTS:
{aspects_block}

REFERENCE_ANSWER:
{reference_answer}

SYSTEM_ANSWER:
{system_answer}"""


def judge_messages(question: str, aspects: AspectSet, reference_answer: str, system_answer: str,
                   system: str = JUDGE_SYSTEM, user: str = JUDGE_USER) -> list[dict]:
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": user.format(question=question, aspects_block=aspects_block(aspects),
                                                reference_answer=reference_answer,
                                                system_answer=system_answer)},
    ]


def judge_remote(client, model: str, question: str, aspects: AspectSet, reference_answer: str,
                 system_answer: str) -> tuple[JudgeVerdict, str]:
    """Ask a chat-completions endpoint to grade; returns the verdict and raw text.

    ``client`` is a :class:`aspecteval.harness.remote.RemoteClient`.
    """
    body = {"model": model, "messages": judge_messages(question, aspects, reference_answer, system_answer)}
    resp = client.post("chat/completions", body)
    try:
        raw = resp["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise JudgeParseError(f"judge response without message content: {resp!r}"[:300]) from exc
    return parse_judge_output(raw, aspects), raw


def load_verdicts(records: Sequence[Mapping], aspects: Mapping[str, AspectSet]) -> dict[tuple[str, int | None], JudgeVerdict]:
    """Build verdicts from records holding either a ``raw`` judge reply or the
    parsed fields; an optional ``round`` keys per-round verdicts."""
    out = {}
    for rec in records:
        qid = str(rec["query_id"])
        if qid not in aspects:
            raise KeyError(f"verdict for unknown query {qid!r}")
        v = parse_judge_output(rec["raw"], aspects[qid]) if "raw" in rec else verdict_from_dict(rec, aspects[qid])
        out[(qid, rec.get("round"))] = v
    return out
