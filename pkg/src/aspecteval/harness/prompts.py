"""Prompt templates for the search agent and the per-round answer turn.

Placeholders use ``str.format`` names; callers may pass their own templates
with the same placeholders.
"""

from __future__ import annotations

from typing import Sequence

from .types import RetrievedDoc

AGENT_SYSTEM = """\
You are a research agent working over a fixed document collection. Answer the \
user's question using evidence you find with the `search` tool.

- Call `search` at most once per turn, then read the results before deciding \
what to do next.
- Adjust later queries to what earlier results did or did not cover.
- Stop searching once the collected evidence addresses the question from all \
the angles it needs.
- Base the answer only on retrieved documents, not on background knowledge, \
and cite documents inline by their id in square brackets, e.g. [20].

When you are done, reply without a tool call in this format:
Answer: <your answer with inline citations>
Confidence: <0-100>%"""

AGENT_USER = "Question: {question}"

ANSWER_TURN = """\
Answer the question below using only the evidence documents listed after it.

Question: {question}

Evidence documents:
{evidence}

Draw on several documents where they add different information, cite each \
claim with its document id in square brackets, and do not rely on anything \
outside these documents.

Reply in this format:
Answer: <your answer with inline citations>
Confidence: <0-100>%"""

CONTINUE_TURN = "Continue the research: issue your next search."

FORCED_ANSWER_TURN = """\
The search budget is used up. Give your final answer now from the evidence \
gathered so far, in the format:
Answer: <your answer with inline citations>
Confidence: <0-100>%"""

SEARCH_TOOL_DESCRIPTION = "Search the document collection and return the top matching passages."


def format_docs(docs: Sequence[RetrievedDoc]) -> str:
    if not docs:
        return "(no documents returned)"
    return "\n\n".join(f"[{d.doc_id}]\n{d.snippet}" for d in docs)


def answer_turn(question: str, evidence: Sequence[RetrievedDoc], template: str = ANSWER_TURN) -> str:
    return template.format(question=question, evidence=format_docs(evidence))
