"""Single seam for all model calls.

Every stage that would talk to a language model goes through
``LlmGateway.complete`` with one of the eight prompt templates shipped under
``regrag/templates/``. Two backends implement the call:

* ``remote`` — HTTP JSON chat-completion (configurable endpoint/model, bearer
  token from an environment variable), with exponential backoff on transient
  failures (3 attempts, 1s then 2s between them).
* ``stub`` — deterministic, offline behaviors per template. These are the
  test oracles for every downstream module; their rules are documented next
  to each template file.

Multi-part template variables (descriptions, context sources, intermediate
answers) are joined with U+001F so the stub can split them unambiguously no
matter what the payload text contains.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import httpx

from .extraction import parse_records, rule_based_records, serialize_records
from .tokenizer import count_tokens, truncate_to_tokens

PART_SEPARATOR = "\x1f"

TEMPLATE_IDS = (
    "extract_elements",
    "continue_extraction",
    "summarize_element",
    "summarize_community",
    "map_answer_and_rate",
    "reduce_answer",
    "naive_answer",
    "local_answer",
)

NO_INFORMATION_ANSWER = "No relevant information was found in the indexed corpus."

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")
_HELPFULNESS_RE = re.compile(r"^HELPFULNESS:\s*(\d+)\s*$", re.MULTILINE)
_SOURCE_BLOCK_RE = re.compile(r"^\[(?P<ref>[^\]]*)\]\s?(?P<text>.*)$", re.DOTALL)
_WORD_RE = re.compile(r"\w+", re.UNICODE)


class GatewayError(RuntimeError):
    """Template, transport, or protocol failure in the model gateway."""


class _RetryableHTTPError(GatewayError):
    """HTTP status worth retrying (429 or 5xx)."""


@dataclass(frozen=True)
class ChatRequest:
    template_id: str
    variables: dict[str, str]
    max_tokens: int = 1024
    temperature: float = 0.0
    model_id: str = ""


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float = 0.0


_template_cache: dict[str, str] = {}


def template_body(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise GatewayError(f"unknown template {template_id!r}")
    if template_id not in _template_cache:
        path = resources.files("regrag").joinpath(f"templates/{template_id}.txt")
        _template_cache[template_id] = path.read_text(encoding="utf-8")
    return _template_cache[template_id]


def render(template_id: str, variables: dict[str, str]) -> str:
    """Substitute ``{{name}}`` placeholders. Values are inserted literally
    (no recursive expansion); any unbound placeholder is an error."""
    body = template_body(template_id)

    def _sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in variables:
            raise GatewayError(f"unbound placeholder {{{{{name}}}}} in {template_id}")
        return variables[name]

    return _PLACEHOLDER_RE.sub(_sub, body)


def parse_extraction_records(text: str):
    """Parse the line-oriented element record format; see ``extraction``."""
    return parse_records(text)


def _question_words(question: str) -> set[str]:
    return {m.group().casefold() for m in _WORD_RE.finditer(question)}


def _matching_sentences(text: str, words: set[str]) -> list[str]:
    from .extraction import split_sentences

    picked = []
    for sentence, _, _ in split_sentences(text):
        sentence_words = {m.group().casefold() for m in _WORD_RE.finditer(sentence)}
        if sentence_words & words:
            picked.append(" ".join(sentence.split()))
    return picked


class StubBackend:
    """Deterministic per-template behaviors; a pure function of the request."""

    def complete(self, request: ChatRequest, prompt: str) -> ChatResponse:
        v = request.variables
        tid = request.template_id
        if tid in ("extract_elements", "continue_extraction"):
            text = serialize_records(rule_based_records(v["chunk_text"]))
        elif tid == "summarize_element":
            parts = [p.strip() for p in v["descriptions"].split(PART_SEPARATOR)]
            unique = sorted({p for p in parts if p})
            text = "; ".join(unique)
        elif tid == "summarize_community":
            text = truncate_to_tokens(v["context"], request.max_tokens)
        elif tid == "map_answer_and_rate":
            words = _question_words(v["question"])
            context_words = {m.group().casefold() for m in _WORD_RE.finditer(v["context"])}
            if words & context_words:
                answer = " ".join(_matching_sentences(v["context"], words))
                text = f"HELPFULNESS: 100\n{truncate_to_tokens(answer, request.max_tokens)}"
            else:
                text = "HELPFULNESS: 0\n"
        elif tid == "reduce_answer":
            parts = [p for p in v["intermediate_answers"].split(PART_SEPARATOR) if p.strip()]
            joined = "\n\n".join(parts) if parts else NO_INFORMATION_ANSWER
            text = truncate_to_tokens(joined, request.max_tokens)
        elif tid in ("naive_answer", "local_answer"):
            words = _question_words(v["question"])
            pieces = []
            for block in v["context"].split(PART_SEPARATOR):
                if not block:
                    continue
                m = _SOURCE_BLOCK_RE.match(block)
                ref, body = (m.group("ref"), m.group("text")) if m else ("", block)
                sentences = _matching_sentences(body, words)
                if sentences:
                    pieces.append(f"[{ref}] " + " ".join(sentences))
            if pieces:
                text = truncate_to_tokens("\n".join(pieces), request.max_tokens)
            else:
                text = NO_INFORMATION_ANSWER
        else:
            raise GatewayError(f"stub has no behavior for template {tid!r}")
        return ChatResponse(
            text=text,
            prompt_tokens=count_tokens(prompt),
            completion_tokens=count_tokens(text),
            latency_ms=0.0,
        )


_RETRY_BACKOFF_S = (1.0, 2.0, 4.0)
_MAX_ATTEMPTS = 3


class RemoteBackend:
    """HTTP JSON chat-completion client.

    Request and response bodies follow the schemas under ``regrag/schemas/``.
    Transient failures (timeouts, connection errors, HTTP 429/5xx) are retried
    with exponential backoff up to 3 attempts total.
    """

    def __init__(self, base_url: str, model_id: str, api_key: str = "",
                 timeout_s: float = 30.0, max_concurrency: int = 4,
                 transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        import threading

        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.model_id = model_id
        self._client = httpx.Client(base_url=base_url, timeout=timeout_s,
                                    headers=headers, transport=transport)
        self._sleep = sleep
        self._semaphore = threading.Semaphore(max_concurrency)

    def complete(self, request: ChatRequest, prompt: str) -> ChatResponse:
        body = {
            "model": request.model_id or self.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(_MAX_ATTEMPTS):
            try:
                started = time.monotonic()
                with self._semaphore:
                    response = self._client.post("/v1/chat/completions", json=body)
                if response.status_code == 429 or response.status_code >= 500:
                    raise _RetryableHTTPError(f"HTTP {response.status_code}")
                if response.status_code != 200:
                    raise GatewayError(
                        f"non-retryable HTTP {response.status_code}: {response.text[:200]}"
                    )
                try:
                    payload = response.json()
                except ValueError as exc:
                    raise GatewayError(f"response body is not JSON: {exc}") from exc
                return self._parse(payload, started)
            except (httpx.TransportError, _RetryableHTTPError) as exc:
                last_error = exc
                if attempt + 1 < _MAX_ATTEMPTS:
                    self._sleep(_RETRY_BACKOFF_S[attempt])
        raise GatewayError(f"gateway exhausted {_MAX_ATTEMPTS} attempts: {last_error}")

    @staticmethod
    def _parse(payload: dict, started: float) -> ChatResponse:
        try:
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat-completion response: {exc}") from exc
        return ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=(time.monotonic() - started) * 1000.0,
        )


@dataclass
class LlmGateway:
    """Facade used by every pipeline stage; picks the configured backend."""

    backend: object = field(default_factory=StubBackend)
    context_limit: int = 128_000

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt = render(request.template_id, request.variables)
        if count_tokens(prompt) + request.max_tokens > self.context_limit:
            raise GatewayError("rendered prompt plus max_tokens exceeds the context limit")
        return self.backend.complete(request, prompt)

    # Convenience wrappers, one per call site.

    def extract(self, chunk_text: str, continuation: bool = False) -> str:
        template = "continue_extraction" if continuation else "extract_elements"
        return self.complete(ChatRequest(template, {"chunk_text": chunk_text},
                                         max_tokens=4096)).text

    def summarize_element(self, descriptions: list[str]) -> str:
        joined = PART_SEPARATOR.join(descriptions)
        return self.complete(ChatRequest("summarize_element",
                                         {"descriptions": joined}, max_tokens=2048)).text

    def summarize_community(self, context: str, budget_tokens: int) -> str:
        return self.complete(ChatRequest("summarize_community", {"context": context},
                                         max_tokens=budget_tokens)).text

    def map_answer_and_rate(self, question: str, context: str,
                            max_tokens: int) -> tuple[str, int]:
        """Returns (answer_text, helpfulness in [0, 100])."""
        text = self.complete(ChatRequest("map_answer_and_rate",
                                         {"question": question, "context": context},
                                         max_tokens=max_tokens)).text
        m = _HELPFULNESS_RE.search(text)
        helpfulness = max(0, min(100, int(m.group(1)))) if m else 0
        answer = _HELPFULNESS_RE.sub("", text, count=1).strip("\n")
        return answer, helpfulness

    def reduce_answer(self, question: str, intermediate_answers: list[str],
                      max_tokens: int) -> str:
        joined = PART_SEPARATOR.join(intermediate_answers)
        return self.complete(ChatRequest("reduce_answer",
                                         {"question": question,
                                          "intermediate_answers": joined},
                                         max_tokens=max_tokens)).text

    def answer_from_context(self, template_id: str, question: str,
                            sources: list[tuple[str, str]], max_tokens: int) -> str:
        """Render ``[ref_id] text`` source blocks and generate an answer."""
        context = PART_SEPARATOR.join(f"[{ref}] {text}" for ref, text in sources)
        return self.complete(ChatRequest(template_id,
                                         {"question": question, "context": context},
                                         max_tokens=max_tokens)).text
