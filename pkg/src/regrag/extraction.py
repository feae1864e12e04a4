"""Extraction record wire format and the deterministic rule-based extractor.

Model responses carry graph elements as one record per line:

    ENTITY|name|type|description
    REL|source|target|description
    CLAIM|subject|object|type|description|start_date|end_date

Field text is backslash-escaped (``\\|`` pipe, ``\\\\`` backslash, ``\\n``/``\\r``
newlines) so arbitrary descriptions survive the line orientation. Malformed
lines are never fatal; parsers count and skip them.

The rule-based extractor is the stub backend's grammar: maximal runs of two or
more capitalized words (after dropping leading determiners) become entities,
entities sharing a sentence are related, and sentences of the form
``<entity> shall/must/is required to ...`` yield obligation claims. It exists
so every downstream stage has an oracle-checkable extraction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_ORG_WORDS = frozenset({
    "commission", "office", "board", "authority", "authorities", "council",
    "parliament", "committee", "agency", "agencies", "body", "bodies", "court",
})
_DETERMINERS = frozenset({"the", "a", "an", "this", "that", "these", "those"})
_MODAL_RE = re.compile(r"\s+(shall|must|is required to)\b\s*")
_WORD_RE = re.compile(r"\w+", re.UNICODE)
_SENTENCE_BREAK_RE = re.compile(r"(?<=[.!?])\s+|\n[ \t]*\n")

CLAIM_TYPE_OBLIGATION = "OBLIGATION"


@dataclass(frozen=True)
class EntityInstance:
    name: str
    type: str
    description: str
    chunk_id: str = ""


@dataclass(frozen=True)
class RelationshipInstance:
    source: str
    target: str
    description: str
    chunk_id: str = ""


@dataclass(frozen=True)
class ClaimInstance:
    subject: str
    object: str
    type: str
    description: str
    start_date: str = ""
    end_date: str = ""
    chunk_id: str = ""


Instance = EntityInstance | RelationshipInstance | ClaimInstance


def _escape(field: str) -> str:
    return (field.replace("\\", "\\\\").replace("|", "\\|")
            .replace("\n", "\\n").replace("\r", "\\r"))


def _split_fields(line: str) -> list[str]:
    fields: list[str] = []
    current: list[str] = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            if nxt == "n":
                current.append("\n")
            elif nxt == "r":
                current.append("\r")
            else:
                current.append(nxt)
            i += 2
            continue
        if ch == "|":
            fields.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    fields.append("".join(current))
    return fields


def serialize_records(instances: list[Instance]) -> str:
    """Render instances in the line-oriented record format."""
    lines = []
    for inst in instances:
        if isinstance(inst, EntityInstance):
            parts = ["ENTITY", inst.name, inst.type, inst.description]
        elif isinstance(inst, RelationshipInstance):
            parts = ["REL", inst.source, inst.target, inst.description]
        else:
            parts = ["CLAIM", inst.subject, inst.object, inst.type,
                     inst.description, inst.start_date, inst.end_date]
        lines.append("|".join(_escape(p) for p in parts))
    return "\n".join(lines)


def parse_records(text: str) -> tuple[list[Instance], int]:
    """Parse record lines into instances; returns (instances, skipped_count)."""
    instances: list[Instance] = []
    skipped = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        fields = _split_fields(line)
        tag = fields[0]
        if tag == "ENTITY" and len(fields) == 4:
            instances.append(EntityInstance(fields[1], fields[2], fields[3]))
        elif tag == "REL" and len(fields) == 4:
            instances.append(RelationshipInstance(fields[1], fields[2], fields[3]))
        elif tag == "CLAIM" and len(fields) == 7:
            instances.append(ClaimInstance(fields[1], fields[2], fields[3],
                                           fields[4], fields[5], fields[6]))
        else:
            skipped += 1
    return instances, skipped


def normalize_name(name: str) -> str:
    """Entity resolution key: case-fold, collapse whitespace, strip determiners."""
    words = [w for w in name.casefold().split()]
    while words and words[0] in _DETERMINERS:
        words.pop(0)
    return " ".join(words)


def split_sentences(text: str) -> list[tuple[str, int, int]]:
    """Sentence spans: breaks after .!? or at blank lines. Offsets are exact."""
    sentences: list[tuple[str, int, int]] = []
    pos = 0
    for m in _SENTENCE_BREAK_RE.finditer(text):
        segment = text[pos : m.start()]
        if segment.strip():
            sentences.append((segment, pos, m.start()))
        pos = m.end()
    tail = text[pos:]
    if tail.strip():
        sentences.append((tail, pos, len(text)))
    return sentences


def _capitalized_runs(sentence: str) -> list[tuple[int, int]]:
    """Spans of maximal runs of capitalized words (hyphens join compounds)."""
    runs: list[tuple[int, int]] = []
    start: int | None = None
    end = 0
    prev_end: int | None = None
    for m in _WORD_RE.finditer(sentence):
        is_cap = m.group()[0].isupper()
        sep = sentence[prev_end : m.start()] if prev_end is not None else ""
        joinable = start is not None and (sep.isspace() or sep == "-")
        if is_cap and joinable:
            end = m.end()
        else:
            if start is not None:
                runs.append((start, end))
            start, end = (m.start(), m.end()) if is_cap else (None, 0)
        prev_end = m.end()
    if start is not None:
        runs.append((start, end))
    return runs


def _entity_names(sentence: str) -> list[str]:
    """Entity surface names in first-occurrence order (deduplicated)."""
    names: list[str] = []
    seen: set[str] = set()
    for start, end in _capitalized_runs(sentence):
        words = sentence[start:end].split()
        while words and words[0].casefold() in _DETERMINERS:
            words.pop(0)
        if len(words) < 2:
            continue
        name = " ".join(words)
        key = normalize_name(name)
        if key not in seen:
            seen.add(key)
            names.append(name)
    return names


def classify_entity(name: str) -> str:
    words = {w.casefold() for w in name.split()}
    return "ORG" if words & _ORG_WORDS else "CONCEPT"


def rule_based_records(text: str) -> list[Instance]:
    """Run the deterministic grammar over raw text.

    Entity and relationship descriptions are the sentence of occurrence;
    obligation claims carry the remainder after the modal as their object.
    """
    instances: list[Instance] = []
    for sentence, _, _ in split_sentences(text):
        flat = " ".join(sentence.split())
        names = _entity_names(sentence)
        for name in names:
            instances.append(EntityInstance(name, classify_entity(name), flat))
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                instances.append(RelationshipInstance(names[i], names[j], flat))
        for name in names:
            idx = flat.find(name)
            while idx >= 0:
                m = _MODAL_RE.match(flat, idx + len(name))
                if m:
                    obligation = flat[m.end():].rstrip(" .!?")
                    instances.append(
                        ClaimInstance(name, obligation, CLAIM_TYPE_OBLIGATION, flat)
                    )
                    break
                idx = flat.find(name, idx + 1)
    return instances
