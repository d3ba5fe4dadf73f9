"""Agentic search episodes: protocols, agents, traces."""

from .protocol import (
    BM25Retriever,
    ScriptedAgent,
    cumulative_cutoff,
    cumulative_evidence,
    cumulative_ranking,
    evaluate_cumulative,
    run_adaptive,
    run_episode,
    run_fixed_round,
    scripted_agent,
)
from .remote import RemoteAgent, RemoteClient, parse_answer, remote_agent
from .snippets import HFTokens, WhitespaceTokens, truncate_snippet
from .types import (
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
)

__all__ = [
    "Agent",
    "AgentState",
    "AnswerAction",
    "BM25Retriever",
    "HFTokens",
    "ProtocolConfig",
    "RemoteAgent",
    "RemoteClient",
    "RetrievedDoc",
    "RoundRecord",
    "STOP_AGENT",
    "STOP_CAP",
    "STOP_FIXED",
    "ScriptedAgent",
    "SearchAction",
    "SearchTrace",
    "WhitespaceTokens",
    "cumulative_cutoff",
    "cumulative_evidence",
    "cumulative_ranking",
    "evaluate_cumulative",
    "parse_answer",
    "remote_agent",
    "run_adaptive",
    "run_episode",
    "run_fixed_round",
    "scripted_agent",
    "truncate_snippet",
]
