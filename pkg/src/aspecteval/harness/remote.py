"""Agent backed by an OpenAI-compatible HTTP endpoint.

Two wire formats are supported:

``chat`` (POST ``{endpoint}/chat/completions``)
    request: ``model``, ``messages`` (system, user, assistant, tool),
    ``tools`` = one function tool ``search(query: string)``, ``tool_choice``.
    response: ``choices[0].message`` with either ``tool_calls[]``
    (``id``, ``function.name``, ``function.arguments`` as a JSON string) or
    ``content``.

``responses`` (POST ``{endpoint}/responses``)
    request: ``model``, ``instructions``, ``input`` (message and
    ``function_call_output`` items), ``tools`` = one ``function`` tool,
    ``tool_choice``. The endpoint is treated as stateless, so the whole input
    is resent each turn.
    response: ``output[]`` items of type ``function_call`` (``call_id``,
    ``name``, ``arguments``) or ``message`` (``content[].text``).

Every request/response pair is kept as an ``exchange`` event and copied into
the episode trace.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from typing import Any, Callable

import httpx

from ..errors import AgentProtocolError, BackendUnavailable
from . import prompts
from .types import PHASE_ANSWER, AgentState, AnswerAction, SearchAction

log = logging.getLogger(__name__)

API_KEY_ENV = ("ASPECTEVAL_API_KEY", "OPENAI_API_KEY")
RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}
TOOL_NAME = "search"
TOOL_PARAMETERS = {
    "type": "object",
    "properties": {"query": {"type": "string", "description": "Search query text."}},
    "required": ["query"],
}

_ANSWER_RE = re.compile(r"Answer:\s*(.*?)(?:\n\s*Confidence:|\Z)", re.S | re.I)
_CONF_RE = re.compile(r"Confidence:\s*([0-9]+(?:\.[0-9]+)?)\s*%?", re.I)


def parse_answer(text: str) -> AnswerAction:
    """Split an ``Answer: ... Confidence: NN%`` reply; falls back to the raw text."""
    text = (text or "").strip()
    m = _ANSWER_RE.search(text)
    body = m.group(1).strip() if m else text
    c = _CONF_RE.search(text)
    return AnswerAction(body, float(c.group(1)) if c else None)


class RemoteClient:
    """POST JSON with retry and exponential backoff on transient failures."""

    def __init__(self, endpoint: str, api_key: str | None = None, client: httpx.Client | None = None,
                 max_retries: int = 4, backoff: float = 1.0, timeout: float = 600.0,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint.rstrip("/")
        if api_key is None:
            api_key = next((os.environ[v] for v in API_KEY_ENV if os.environ.get(v)), None)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.http = client or httpx.Client(timeout=timeout)
        self.headers = headers
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep

    def post(self, path: str, body: dict) -> dict:
        url = f"{self.endpoint}/{path.lstrip('/')}"
        last: str = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.http.post(url, json=body, headers=self.headers)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("POST %s failed (attempt %d): %s", url, attempt + 1, last)
                continue
            if resp.status_code in RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("POST %s returned %d (attempt %d)", url, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"POST {url} returned HTTP {resp.status_code}: {resp.text[:500]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendUnavailable(f"POST {url} returned non-JSON body") from exc
        raise BackendUnavailable(f"POST {url} failed after {self.max_retries + 1} attempts ({last})")


class _ChatWire:
    path = "chat/completions"

    def start(self, system: str, user: str) -> list[dict]:
        return [{"role": "system", "content": system}, {"role": "user", "content": user}]

    def user(self, text: str) -> dict:
        return {"role": "user", "content": text}

    def tool_result(self, call_id: str, text: str) -> dict:
        return {"role": "tool", "tool_call_id": call_id, "content": text}

    def request(self, model: str, items: list[dict], tools: bool) -> dict:
        return {
            "model": model,
            "messages": items,
            "tools": [{"type": "function", "function": {
                "name": TOOL_NAME, "description": prompts.SEARCH_TOOL_DESCRIPTION,
                "parameters": TOOL_PARAMETERS}}],
            "tool_choice": "auto" if tools else "none",
        }

    def parse(self, resp: dict) -> tuple[list[tuple[str, str, Any]], str, list[dict]]:
        try:
            msg = resp["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise AgentProtocolError(f"chat response without choices[0].message: {resp!r}"[:500]) from exc
        calls = [(c.get("id", ""), (c.get("function") or {}).get("name"), (c.get("function") or {}).get("arguments"))
                 for c in msg.get("tool_calls") or []]
        keep = {"role": "assistant", "content": msg.get("content")}
        if msg.get("tool_calls"):
            keep["tool_calls"] = msg["tool_calls"]
        return calls, msg.get("content") or "", [keep]


class _ResponsesWire:
    path = "responses"

    def __init__(self):
        self.instructions = ""

    def start(self, system: str, user: str) -> list[dict]:
        self.instructions = system
        return [self.user(user)]

    def user(self, text: str) -> dict:
        return {"role": "user", "content": text}

    def tool_result(self, call_id: str, text: str) -> dict:
        return {"type": "function_call_output", "call_id": call_id, "output": text}

    def request(self, model: str, items: list[dict], tools: bool) -> dict:
        return {
            "model": model,
            "instructions": self.instructions,
            "input": items,
            "tools": [{"type": "function", "name": TOOL_NAME, "description": prompts.SEARCH_TOOL_DESCRIPTION,
                       "parameters": TOOL_PARAMETERS}],
            "tool_choice": "auto" if tools else "none",
        }

    def parse(self, resp: dict):
        output = resp.get("output")
        if not isinstance(output, list):
            raise AgentProtocolError(f"responses payload without output list: {resp!r}"[:500])
        calls, texts = [], []
        for item in output:
            if item.get("type") == "function_call":
                calls.append((item.get("call_id", ""), item.get("name"), item.get("arguments")))
            elif item.get("type") == "message":
                for part in item.get("content") or []:
                    if part.get("type") in ("output_text", "text"):
                        texts.append(part.get("text", ""))
        return calls, "".join(texts), list(output)


WIRES = {"chat": _ChatWire, "responses": _ResponsesWire}


class RemoteAgent:
    """One episode's worth of conversation with a remote model.

    The whole episode is a single growing conversation. Per-round answers in
    fixed mode are requested with the answer-turn prompt and tools disabled;
    the next search turn resumes the same conversation.
    """

    def __init__(self, endpoint: str, model: str, wire: str = "chat", client: RemoteClient | None = None,
                 max_protocol_retries: int = 2, system_prompt: str = prompts.AGENT_SYSTEM,
                 answer_template: str = prompts.ANSWER_TURN, **client_kwargs):
        if wire not in WIRES:
            raise ValueError(f"wire must be one of {sorted(WIRES)}, got {wire!r}")
        self.client = client or RemoteClient(endpoint, **client_kwargs)
        self.model = model
        self.wire = WIRES[wire]()
        self.max_protocol_retries = max_protocol_retries
        self.system_prompt = system_prompt
        self.answer_template = answer_template
        self.items: list[dict] = []
        self._pending_call: str | None = None
        self._answered_last = False
        self._events: list[dict] = []

    def drain_events(self) -> list[dict]:
        out, self._events = self._events, []
        return out

    def _warn(self, message: str):
        log.warning(message)
        self._events.append({"kind": "protocol-warning", "message": message})

    def _send(self, tools: bool) -> dict:
        body = self.wire.request(self.model, self.items, tools)
        resp = self.client.post(self.wire.path, body)
        self._events.append({"kind": "exchange", "request": json.loads(json.dumps(body)), "response": resp})
        return resp

    def _sync(self, state: AgentState):
        if not self.items:
            self.items = self.wire.start(self.system_prompt, prompts.AGENT_USER.format(question=state.question))
            return
        if self._pending_call is not None:
            last = state.rounds[-1] if state.rounds else None
            text = prompts.format_docs(last.results) if last else "(no documents returned)"
            self.items.append(self.wire.tool_result(self._pending_call, text))
            self._pending_call = None
        elif self._answered_last and state.phase != PHASE_ANSWER:
            self.items.append(self.wire.user(prompts.CONTINUE_TURN))

    def next_action(self, state: AgentState):
        self._sync(state)
        if state.phase == PHASE_ANSWER:
            turn = (prompts.FORCED_ANSWER_TURN if state.forced
                    else prompts.answer_turn(state.question, state.evidence, self.answer_template))
            self.items.append(self.wire.user(turn))
            return self._answer_turn()
        return self._search_turn()

    def _answer_turn(self) -> AnswerAction:
        for attempt in range(self.max_protocol_retries + 1):
            calls, text, keep = self.wire.parse(self._send(tools=False))
            self.items.extend(keep)
            if not calls and text.strip():
                self._answered_last = True
                return parse_answer(text)
            self._warn(f"expected a text answer, got {'a tool call' if calls else 'an empty reply'}")
            for call_id, _, _ in calls:
                self.items.append(self.wire.tool_result(call_id, "Searching is closed; answer in text."))
            if not calls:
                self.items.append(self.wire.user(prompts.FORCED_ANSWER_TURN))
        raise AgentProtocolError("agent did not produce a text answer")

    def _search_turn(self):
        self._answered_last = False
        for attempt in range(self.max_protocol_retries + 1):
            calls, text, keep = self.wire.parse(self._send(tools=True))
            self.items.extend(keep)
            if not calls:
                if text.strip():
                    self._answered_last = True
                    return parse_answer(text)
                self._warn("empty reply with no tool call")
                self.items.append(self.wire.user(prompts.CONTINUE_TURN))
                continue
            call_id, name, raw_args = calls[0]
            if name != TOOL_NAME:
                raise AgentProtocolError(f"agent called unknown tool {name!r}")
            for extra_id, _, _ in calls[1:]:
                self._warn("more than one search in a turn; extra calls ignored")
                self.items.append(self.wire.tool_result(extra_id, "Ignored: only one search per turn."))
            query = _query_arg(raw_args)
            if query is None:
                self._warn(f"malformed search arguments: {raw_args!r}"[:300])
                self.items.append(self.wire.tool_result(
                    call_id, 'Error: arguments must be a JSON object like {"query": "..."}. Try again.'))
                continue
            self._pending_call = call_id
            return SearchAction(query)
        raise AgentProtocolError(f"no valid search call after {self.max_protocol_retries + 1} attempts")


def _query_arg(raw) -> str | None:
    if isinstance(raw, dict):
        args = raw
    else:
        try:
            args = json.loads(raw)
        except (TypeError, ValueError):
            return None
    if not isinstance(args, dict):
        return None
    q = args.get("query")
    if not isinstance(q, str) or not q.strip():
        return None
    return q


def remote_agent(endpoint: str, model: str, wire: str = "chat", **kwargs) -> RemoteAgent:
    return RemoteAgent(endpoint, model, wire=wire, **kwargs)
