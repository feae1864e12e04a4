"""Deterministic reference tokenizer used for all token budgets.

Tokens are maximal runs of word characters or single non-space punctuation
characters. No model files, no locale dependence: identical input bytes give
identical token sequences on every platform, which makes chunk budgets and
context packing reproducible test oracles.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class Token:
    """A single token with its [start, end) character span in the source text."""

    text: str
    start: int
    end: int


class Tokenizer(Protocol):
    """Pluggable tokenizer interface; implementations must be deterministic."""

    def tokenize(self, text: str) -> list[Token]: ...

    def count(self, text: str) -> int: ...


class WordPunctTokenizer:
    """Reference tokenizer: word runs and individual punctuation marks.

    Whitespace never produces tokens, so joining two texts with a space (or
    newline) keeps token counts additive: count(a + " " + b) == count(a) + count(b).
    """

    def tokenize(self, text: str) -> list[Token]:
        return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]

    def count(self, text: str) -> int:
        return sum(1 for _ in _TOKEN_RE.finditer(text))


DEFAULT_TOKENIZER = WordPunctTokenizer()


def count_tokens(text: str) -> int:
    """Token count under the reference tokenizer."""
    return DEFAULT_TOKENIZER.count(text)


def tokenize(text: str) -> list[Token]:
    """Token sequence (with character spans) under the reference tokenizer."""
    return DEFAULT_TOKENIZER.tokenize(text)


def truncate_to_tokens(text: str, budget: int) -> str:
    """Longest prefix of ``text`` containing at most ``budget`` whole tokens.

    Cuts at a token boundary; never splits a token.
    """
    if budget <= 0:
        return ""
    tokens = tokenize(text)
    if len(tokens) <= budget:
        return text
    return text[: tokens[budget - 1].end]
