"""Document ingestion: ToC-aligned sectioning and token-bounded chunking.

Input is UTF-8 text, either heading-structured markup (``#``..``######``
heading lines define the ToC) or plain text with an optional JSON sidecar ToC.
Sections follow the ToC; chunks are sliding token windows over each section
with a configurable overlap. Everything here is a pure function of the input
bytes and the chunking config, so chunk ids and spans are reproducible.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .ids import stable_id
from .tokenizer import Tokenizer, DEFAULT_TOKENIZER

ROOT_SECTION = "<root>"

_HEADING_RE = re.compile(r"^(#{1,6})[ \t]+(.*?)\s*$", re.MULTILINE)


class IngestError(ValueError):
    """Malformed input document, ToC, or chunking parameters."""


@dataclass(frozen=True)
class TocEntry:
    heading: str
    level: int
    char_span: tuple[int, int]  # span of the heading line itself


@dataclass(frozen=True)
class SourceDocument:
    doc_id: str
    title: str
    uri: str
    raw_text: str
    toc: tuple[TocEntry, ...]


@dataclass(frozen=True)
class Section:
    """Contiguous text governed by one heading (its full ancestry in the path)."""

    section_path: tuple[str, ...]
    text: str
    char_span: tuple[int, int]


@dataclass(frozen=True)
class DocumentChunk:
    chunk_id: str
    doc_id: str
    section_path: tuple[str, ...]
    text: str
    token_count: int
    char_span: tuple[int, int]

    def to_record(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "section_path": list(self.section_path),
            "text": self.text,
            "token_count": self.token_count,
            "char_span": list(self.char_span),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DocumentChunk":
        return cls(
            chunk_id=rec["chunk_id"],
            doc_id=rec["doc_id"],
            section_path=tuple(rec["section_path"]),
            text=rec["text"],
            token_count=rec["token_count"],
            char_span=(rec["char_span"][0], rec["char_span"][1]),
        )


def document_id(title: str, raw_text: str) -> str:
    """Stable id; re-ingesting identical bytes under the same title is idempotent."""
    return stable_id("doc", title, raw_text)


def _validate_toc(toc: Iterable[TocEntry], text_len: int) -> None:
    prev_end = -1
    prev_level: int | None = None
    for entry in toc:
        start, end = entry.char_span
        if not (0 <= start <= end <= text_len):
            raise IngestError(
                f"ToC entry {entry.heading!r} span {entry.char_span} outside text bounds"
            )
        if start < prev_end:
            raise IngestError(f"ToC entry {entry.heading!r} overlaps the previous entry")
        if entry.level < 1:
            raise IngestError(f"ToC entry {entry.heading!r} has level {entry.level} < 1")
        if prev_level is not None and entry.level > prev_level + 1:
            raise IngestError(
                f"ToC entry {entry.heading!r} jumps from level {prev_level} to {entry.level}"
            )
        prev_end = end
        prev_level = entry.level


def parse_markup_toc(raw_text: str) -> tuple[TocEntry, ...]:
    """ToC entries from heading-marker lines (1-6 repetitions of ``#``)."""
    entries = []
    for m in _HEADING_RE.finditer(raw_text):
        # Heading line span includes the trailing newline when present.
        end = m.end()
        if end < len(raw_text) and raw_text[end] == "\n":
            end += 1
        entries.append(TocEntry(heading=m.group(2), level=len(m.group(1)), char_span=(m.start(), end)))
    return tuple(entries)


def load_sidecar_toc(path: Path) -> tuple[TocEntry, ...]:
    """Sidecar ToC: JSON array of {heading, level, start, end}."""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"malformed sidecar ToC {path}: {exc}") from exc
    entries = []
    for item in data:
        try:
            entries.append(
                TocEntry(heading=item["heading"], level=int(item["level"]),
                         char_span=(int(item["start"]), int(item["end"])))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"malformed sidecar ToC entry {item!r}") from exc
    return tuple(entries)


def load_document(path: str | Path, format: str = "structured_markup",
                  title: str | None = None) -> SourceDocument:
    """Read a document file and parse its ToC.

    ``structured_markup`` derives the ToC from heading lines; ``plain_text``
    reads an optional ``<file>.toc.json`` sidecar. The raw text is preserved
    byte-exact.
    """
    path = Path(path)
    try:
        raw_text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise IngestError(f"{path} is not valid UTF-8: {exc}") from exc

    if format == "structured_markup":
        toc = parse_markup_toc(raw_text)
    elif format == "plain_text":
        sidecar = path.with_name(path.name + ".toc.json")
        toc = load_sidecar_toc(sidecar) if sidecar.exists() else ()
    else:
        raise IngestError(f"unknown document format {format!r}")

    _validate_toc(toc, len(raw_text))
    title = title if title is not None else path.stem
    return SourceDocument(
        doc_id=document_id(title, raw_text),
        title=title,
        uri=str(path),
        raw_text=raw_text,
        toc=toc,
    )


def document_from_text(title: str, raw_text: str,
                       toc: Iterable[dict] | None = None, uri: str = "") -> SourceDocument:
    """Build a document from in-memory text (service ingestion path).

    When ``toc`` is None the text is treated as structured markup; an explicit
    ToC (possibly empty) takes precedence.
    """
    if toc is None:
        entries = parse_markup_toc(raw_text)
    else:
        entries = tuple(
            TocEntry(heading=t["heading"], level=int(t["level"]),
                     char_span=(int(t["start"]), int(t["end"])))
            for t in toc
        )
    _validate_toc(entries, len(raw_text))
    return SourceDocument(
        doc_id=document_id(title, raw_text),
        title=title,
        uri=uri,
        raw_text=raw_text,
        toc=entries,
    )


def segment_by_toc(doc: SourceDocument) -> list[Section]:
    """Split a document into ToC-aligned sections in document order.

    Text between a heading and the next heading (at any level) belongs to the
    earlier heading's section; text before the first heading becomes a
    ``<root>`` section. Section paths carry the full heading ancestry.
    """
    raw = doc.raw_text
    if not doc.toc:
        return [Section(section_path=(ROOT_SECTION,), text=raw, char_span=(0, len(raw)))]

    sections: list[Section] = []
    first_start = doc.toc[0].char_span[0]
    if first_start > 0:
        sections.append(Section((ROOT_SECTION,), raw[:first_start], (0, first_start)))

    stack: list[TocEntry] = []
    for i, entry in enumerate(doc.toc):
        while stack and stack[-1].level >= entry.level:
            stack.pop()
        stack.append(entry)
        content_start = entry.char_span[1]
        content_end = doc.toc[i + 1].char_span[0] if i + 1 < len(doc.toc) else len(raw)
        sections.append(
            Section(
                section_path=tuple(e.heading for e in stack),
                text=raw[content_start:content_end],
                char_span=(content_start, content_end),
            )
        )
    return sections


def chunk_section(section: Section, doc_id: str, chunk_tokens: int, overlap_tokens: int,
                  tokenizer: Tokenizer = DEFAULT_TOKENIZER,
                  first_ordinal: int = 0) -> list[DocumentChunk]:
    """Sliding token windows over one section.

    Every chunk holds at most ``chunk_tokens`` tokens; consecutive chunks share
    exactly ``overlap_tokens`` tokens (the final chunk may share more of its
    predecessor when the tail is short). Chunk text is cut at token boundaries,
    so dropping each chunk's leading overlap and concatenating reproduces the
    section's token stream.
    """
    if chunk_tokens <= 0 or overlap_tokens < 0 or overlap_tokens >= chunk_tokens:
        raise IngestError(
            f"invalid chunking budget: chunk_tokens={chunk_tokens} overlap_tokens={overlap_tokens}"
        )
    tokens = tokenizer.tokenize(section.text)
    if not tokens:
        return []

    step = chunk_tokens - overlap_tokens
    chunks: list[DocumentChunk] = []
    start = 0
    ordinal = first_ordinal
    while True:
        end = min(start + chunk_tokens, len(tokens))
        window = tokens[start:end]
        text = section.text[window[0].start : window[-1].end]
        span = (section.char_span[0] + window[0].start, section.char_span[0] + window[-1].end)
        chunks.append(
            DocumentChunk(
                chunk_id=stable_id("chunk", doc_id, "/".join(section.section_path), str(ordinal)),
                doc_id=doc_id,
                section_path=section.section_path,
                text=text,
                token_count=len(window),
                char_span=span,
            )
        )
        ordinal += 1
        if end == len(tokens):
            return chunks
        start += step


def chunk_document(doc: SourceDocument, chunk_tokens: int, overlap_tokens: int,
                   tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> list[DocumentChunk]:
    """Segment a document by its ToC and chunk every section.

    Chunk ordinals continue across sections that share a path (duplicate
    headings) so chunk ids stay unique within the document.
    """
    chunks: list[DocumentChunk] = []
    next_ordinal: dict[tuple[str, ...], int] = {}
    for section in segment_by_toc(doc):
        ordinal = next_ordinal.get(section.section_path, 0)
        produced = chunk_section(section, doc.doc_id, chunk_tokens, overlap_tokens,
                                 tokenizer, first_ordinal=ordinal)
        next_ordinal[section.section_path] = ordinal + len(produced)
        chunks.extend(produced)
    return chunks
