from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, Union

from ..errors import ProtocolViolation

STOP_FIXED = "fixed-budget"
STOP_AGENT = "agent-stop"
STOP_CAP = "round-cap"
STOP_REASONS = (STOP_FIXED, STOP_AGENT, STOP_CAP)

PHASE_SEARCH = "search"
PHASE_ANSWER = "answer"


@dataclass(frozen=True)
class SearchAction:
    query: str


@dataclass(frozen=True)
class AnswerAction:
    text: str
    confidence: float | None = None


Action = Union[SearchAction, AnswerAction]


@dataclass(frozen=True)
class RetrievedDoc:
    doc_id: str
    score: float
    snippet: str
    truncated: bool = False


@dataclass(frozen=True)
class RoundRecord:
    number: int
    query: str
    results: tuple[RetrievedDoc, ...]
    answer: AnswerAction | None = None


@dataclass
class SearchTrace:
    query_id: str
    query: str
    mode: str
    rounds: list[RoundRecord] = field(default_factory=list)
    stop_reason: str | None = None
    final_answer: str | None = None
    confidence: float | None = None
    events: list[dict] = field(default_factory=list)

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    @property
    def complete(self) -> bool:
        return self.stop_reason is not None


@dataclass(frozen=True)
class ProtocolConfig:
    mode: str = "fixed"
    fixed_rounds: int = 3
    round_cap: int = 100
    per_round_k: int = 5
    snippet_budget: int = 2048

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"mode must be 'fixed' or 'adaptive', got {self.mode!r}")
        if self.fixed_rounds not in (1, 2, 3):
            raise ValueError(f"fixed_rounds must be 1, 2 or 3, got {self.fixed_rounds}")
        if self.round_cap < 1:
            raise ValueError("round_cap must be positive")
        if self.per_round_k < 1:
            raise ValueError("per_round_k must be positive")
        if self.snippet_budget < 1:
            raise ValueError("snippet_budget must be positive")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "fixed_rounds": self.fixed_rounds,
            "round_cap": self.round_cap,
            "per_round_k": self.per_round_k,
            "snippet_budget": self.snippet_budget,
        }


@dataclass(frozen=True)
class AgentState:
    """What an agent sees when asked for its next move.

    ``phase`` is ``"search"`` when the harness expects a search (adaptive mode
    also accepts an answer once at least one round has run) and ``"answer"``
    when it needs an answer now; ``forced`` marks the answer demanded at the
    round cap.
    """

    query_id: str
    question: str
    mode: str
    phase: str
    rounds: tuple[RoundRecord, ...]
    evidence: tuple[RetrievedDoc, ...]
    forced: bool = False

    @property
    def round_number(self) -> int:
        return len(self.rounds)


class Agent(Protocol):
    def next_action(self, state: AgentState) -> Action: ...


def coerce_action(obj) -> Action:
    """Accept actions or ``{"search": q}`` / ``{"answer": text, "confidence": c}`` dicts."""
    if isinstance(obj, (SearchAction, AnswerAction)):
        return obj
    if isinstance(obj, dict):
        if "search" in obj:
            return SearchAction(str(obj["search"]))
        if "answer" in obj:
            conf = obj.get("confidence")
            return AnswerAction(str(obj["answer"]), None if conf is None else float(conf))
    raise ProtocolViolation(f"not an agent action: {obj!r}")


Hit = Union[RetrievedDoc, Sequence]
