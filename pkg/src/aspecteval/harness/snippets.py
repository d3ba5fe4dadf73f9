"""Snippet truncation under a pluggable token-counting scheme."""

from __future__ import annotations

import re
from typing import Protocol

_NON_SPACE = re.compile(r"\S+")


class TokenCounter(Protocol):
    def truncate(self, text: str, budget: int) -> str: ...


class WhitespaceTokens:
    """Tokens are maximal runs of non-whitespace."""

    name = "whitespace"

    def truncate(self, text: str, budget: int) -> str:
        end = None
        for i, m in enumerate(_NON_SPACE.finditer(text)):
            if i == budget:
                return text[:end]
            end = m.end()
        return text


class HFTokens:
    """Count with a Hugging Face tokenizer; cut at the end of the last kept token.

    ``tokenizer`` is either a loaded fast tokenizer or a model name to load with
    ``transformers.AutoTokenizer``.
    """

    def __init__(self, tokenizer):
        if isinstance(tokenizer, str):
            from transformers import AutoTokenizer

            self.name = tokenizer
            tokenizer = AutoTokenizer.from_pretrained(tokenizer)
        else:
            self.name = getattr(tokenizer, "name_or_path", type(tokenizer).__name__)
        self._tok = tokenizer

    def truncate(self, text: str, budget: int) -> str:
        enc = self._tok(text, add_special_tokens=False, return_offsets_mapping=True)
        offsets = enc["offset_mapping"]
        if len(offsets) <= budget:
            return text
        return text[: offsets[budget - 1][1]]


def truncate_snippet(text: str, budget: int = 2048, counter: TokenCounter | None = None) -> str:
    if budget < 1:
        raise ValueError(f"budget must be positive, got {budget}")
    return (counter or WhitespaceTokens()).truncate(text, budget)
