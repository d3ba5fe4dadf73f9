"""Fixed-round and adaptive-round search episodes.

A retriever is any callable ``retriever(query, k)`` returning hits, where a
hit is a :class:`RetrievedDoc` or a ``(doc_id, score, text)`` tuple. Snippet
truncation is applied here, after retrieval.
"""

from __future__ import annotations

import logging
from typing import Callable, Iterable, Mapping, Sequence

from ..bm25 import InvertedIndex, search
from ..core import MetricConfig, RankedRun
from ..errors import EmptyQuery, ProtocolViolation, RetrievalError, ScriptExhausted
from ..metrics import EvaluationReport, evaluate_run
from .snippets import TokenCounter, WhitespaceTokens
from .types import (
    PHASE_ANSWER,
    PHASE_SEARCH,
    STOP_AGENT,
    STOP_CAP,
    STOP_FIXED,
    Agent,
    AgentState,
    AnswerAction,
    ProtocolConfig,
    RetrievedDoc,
    RoundRecord,
    SearchAction,
    SearchTrace,
    coerce_action,
)

log = logging.getLogger(__name__)

Retriever = Callable[[str, int], Sequence]


class ScriptedAgent:
    """Replays a fixed list of actions, one per call."""

    def __init__(self, script: Iterable):
        self.script = [coerce_action(a) for a in script]
        self.calls = 0

    def next_action(self, state: AgentState):
        if self.calls >= len(self.script):
            raise ScriptExhausted(
                f"script of {len(self.script)} actions exhausted at round {state.round_number} "
                f"({state.phase} phase)"
            )
        action = self.script[self.calls]
        self.calls += 1
        return action


def scripted_agent(script: Iterable) -> ScriptedAgent:
    return ScriptedAgent(script)


class BM25Retriever:
    """Adapts a BM25 index plus a ``doc_id -> text`` lookup to the retriever contract."""

    def __init__(self, index: InvertedIndex, texts: Mapping[str, str]):
        self.index = index
        self.texts = texts

    def __call__(self, query: str, k: int) -> list[tuple[str, float, str]]:
        try:
            run = search(self.index, query, k)
        except EmptyQuery:
            return []
        return [(d, s, self.texts.get(d, "")) for d, s in run.items]


class _Episode:
    def __init__(self, agent: Agent, retriever: Retriever, query: str, config: ProtocolConfig,
                 query_id: str, counter: TokenCounter | None):
        self.agent = agent
        self.retriever = retriever
        self.config = config
        self.counter = counter or WhitespaceTokens()
        self.trace = SearchTrace(query_id=query_id, query=query, mode=config.mode)

    def state(self, phase: str, forced: bool = False) -> AgentState:
        return AgentState(
            query_id=self.trace.query_id,
            question=self.trace.query,
            mode=self.config.mode,
            phase=phase,
            rounds=tuple(self.trace.rounds),
            evidence=tuple(cumulative_evidence(self.trace.rounds)),
            forced=forced,
        )

    def ask(self, phase: str, forced: bool = False):
        action = coerce_action(self.agent.next_action(self.state(phase, forced)))
        self._collect_events()
        return action

    def _collect_events(self):
        drain = getattr(self.agent, "drain_events", None)
        if drain is not None:
            for ev in drain():
                self.trace.events.append({"round": self.trace.num_rounds, **ev})

    def search_round(self, action: SearchAction) -> RoundRecord:
        number = self.trace.num_rounds + 1
        k = self.config.per_round_k
        try:
            hits = list(self.retriever(action.query, k))
        except Exception as exc:
            raise RetrievalError(number, exc) from exc
        results, seen = [], set()
        for hit in hits:
            doc = _as_doc(hit)
            if doc.doc_id in seen:
                continue
            seen.add(doc.doc_id)
            cut = self.counter.truncate(doc.snippet, self.config.snippet_budget)
            results.append(RetrievedDoc(doc.doc_id, doc.score, cut, len(cut) < len(doc.snippet)))
            if len(results) == k:
                break
        record = RoundRecord(number, action.query, tuple(results))
        self.trace.rounds.append(record)
        return record

    def finish(self, reason: str, answer: AnswerAction) -> SearchTrace:
        self.trace.stop_reason = reason
        self.trace.final_answer = answer.text
        self.trace.confidence = answer.confidence
        return self.trace


def _as_doc(hit) -> RetrievedDoc:
    if isinstance(hit, RetrievedDoc):
        return hit
    doc_id, score, text = hit
    return RetrievedDoc(str(doc_id), float(score), text or "")


def run_fixed_round(agent: Agent, retriever: Retriever, query: str, config: ProtocolConfig | None = None,
                    query_id: str = "", counter: TokenCounter | None = None) -> SearchTrace:
    """Exactly ``config.fixed_rounds`` searches, with an answer after each one."""
    config = config or ProtocolConfig(mode="fixed")
    if config.mode != "fixed":
        raise ValueError("run_fixed_round needs a config with mode='fixed'")
    ep = _Episode(agent, retriever, query, config, query_id, counter)
    answer = None
    for _ in range(config.fixed_rounds):
        action = ep.ask(PHASE_SEARCH)
        if not isinstance(action, SearchAction):
            raise ProtocolViolation(
                f"fixed protocol expected a search in round {ep.trace.num_rounds + 1}, got an answer")
        ep.search_round(action)
        answer = ep.ask(PHASE_ANSWER)
        if not isinstance(answer, AnswerAction):
            raise ProtocolViolation(f"expected an answer after round {ep.trace.num_rounds}, got a search")
        last = ep.trace.rounds[-1]
        ep.trace.rounds[-1] = RoundRecord(last.number, last.query, last.results, answer)
    return ep.finish(STOP_FIXED, answer)


def run_adaptive(agent: Agent, retriever: Retriever, query: str, config: ProtocolConfig | None = None,
                 query_id: str = "", counter: TokenCounter | None = None) -> SearchTrace:
    """Search until the agent answers or the round cap forces a final answer.

    At least one search must precede the answer.
    """
    config = config or ProtocolConfig(mode="adaptive")
    if config.mode != "adaptive":
        raise ValueError("run_adaptive needs a config with mode='adaptive'")
    ep = _Episode(agent, retriever, query, config, query_id, counter)
    while ep.trace.num_rounds < config.round_cap:
        action = ep.ask(PHASE_SEARCH)
        if isinstance(action, AnswerAction):
            if ep.trace.num_rounds == 0:
                raise ProtocolViolation("agent answered before issuing any search")
            return ep.finish(STOP_AGENT, action)
        ep.search_round(action)
    answer = ep.ask(PHASE_ANSWER, forced=True)
    if not isinstance(answer, AnswerAction):
        raise ProtocolViolation(f"agent kept searching after the {config.round_cap}-round cap")
    return ep.finish(STOP_CAP, answer)


def run_episode(agent: Agent, retriever: Retriever, query: str, config: ProtocolConfig,
                query_id: str = "", counter: TokenCounter | None = None) -> SearchTrace:
    fn = run_fixed_round if config.mode == "fixed" else run_adaptive
    return fn(agent, retriever, query, config, query_id, counter)


def cumulative_evidence(rounds: Iterable[RoundRecord]) -> list[RetrievedDoc]:
    out, seen = [], set()
    for rnd in rounds:
        for doc in rnd.results:
            if doc.doc_id not in seen:
                seen.add(doc.doc_id)
                out.append(doc)
    return out


def cumulative_ranking(trace: SearchTrace, upto_round: int) -> RankedRun:
    """Documents retrieved through ``upto_round``, first occurrence kept."""
    if not 0 <= upto_round <= trace.num_rounds:
        raise ValueError(f"trace has {trace.num_rounds} rounds, asked for {upto_round}")
    docs = cumulative_evidence(trace.rounds[:upto_round])
    return RankedRun.from_order(trace.query_id, [d.doc_id for d in docs])


def cumulative_cutoff(round_number: int, per_round_k: int = 5) -> int:
    return round_number * per_round_k


def evaluate_cumulative(traces: Mapping[str, SearchTrace], qrels: Mapping, rounds: Sequence[int] = (1, 2, 3),
                        per_round_k: int = 5, alpha: float = 0.5) -> dict[int, EvaluationReport]:
    """alpha-nDCG and friends of the cumulative ranking after each round ``r``,
    at cutoff ``r * per_round_k``."""
    out = {}
    for r in rounds:
        runs = {qid: cumulative_ranking(t, min(r, t.num_rounds)) for qid, t in traces.items()}
        cfg = MetricConfig(alpha=alpha, cutoffs=(cumulative_cutoff(r, per_round_k),))
        out[r] = evaluate_run(runs, {q: qrels[q] for q in traces if q in qrels}, cfg)
    return out
