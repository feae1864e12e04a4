"""Knowledge graph construction from extracted element instances.

Per-chunk extraction (through the gateway) yields raw entity, relationship,
and claim instances; merging folds them into a simple, undirected,
count-weighted graph: entities dedupe on (normalized name, type), relationship
instances on the same unordered entity pair accumulate into one edge whose
weight is the instance count, and claims attach to resolved subjects. Merging
is commutative and associative, so any permutation of the instance list
produces an identical graph.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .extraction import (ClaimInstance, EntityInstance, Instance,
                         RelationshipInstance, normalize_name, parse_records)
from .gateway import LlmGateway
from .ids import stable_id
from .ingest import DocumentChunk


class GraphError(ValueError):
    """Unknown entity or malformed graph input."""


@dataclass
class Entity:
    entity_id: str
    name: str
    type: str
    description: str
    source_chunks: set[str] = field(default_factory=set)

    def to_record(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "name": self.name,
            "type": self.type,
            "description": self.description,
            "source_chunks": sorted(self.source_chunks),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Entity":
        return cls(rec["entity_id"], rec["name"], rec["type"], rec["description"],
                   set(rec["source_chunks"]))


@dataclass
class Relationship:
    source: str
    target: str
    description: str
    mention_count: int
    source_chunks: set[str] = field(default_factory=set)

    @property
    def pair(self) -> tuple[str, str]:
        return (self.source, self.target) if self.source <= self.target else (self.target, self.source)

    def to_record(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "description": self.description,
            "mention_count": self.mention_count,
            "source_chunks": sorted(self.source_chunks),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Relationship":
        return cls(rec["source"], rec["target"], rec["description"],
                   rec["mention_count"], set(rec["source_chunks"]))


@dataclass
class Claim:
    claim_id: str
    subject: str
    object: str
    type: str
    description: str
    source_span: tuple[int, int]
    chunk_id: str
    start_date: str = ""
    end_date: str = ""

    def to_record(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "subject": self.subject,
            "object": self.object,
            "type": self.type,
            "description": self.description,
            "source_span": list(self.source_span),
            "chunk_id": self.chunk_id,
            "start_date": self.start_date,
            "end_date": self.end_date,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Claim":
        return cls(rec["claim_id"], rec["subject"], rec["object"], rec["type"],
                   rec["description"], (rec["source_span"][0], rec["source_span"][1]),
                   rec["chunk_id"], rec["start_date"], rec["end_date"])


@dataclass
class KnowledgeGraph:
    entities: dict[str, Entity] = field(default_factory=dict)
    edges: dict[tuple[str, str], Relationship] = field(default_factory=dict)
    claims: list[Claim] = field(default_factory=list)
    diagnostics: dict[str, int] = field(default_factory=dict)

    def edge(self, a: str, b: str) -> Relationship | None:
        return self.edges.get((a, b) if a <= b else (b, a))

    def degree(self, entity_id: str) -> int:
        """Number of distinct incident edges (unweighted)."""
        if entity_id not in self.entities:
            raise GraphError(f"unknown entity {entity_id!r}")
        return sum(1 for pair in self.edges if entity_id in pair)

    def neighbors(self, entity_id: str) -> list[str]:
        out = []
        for a, b in self.edges:
            if a == entity_id:
                out.append(b)
            elif b == entity_id:
                out.append(a)
        return sorted(out)

    def claims_for(self, entity_id: str) -> list[Claim]:
        return [c for c in self.claims if c.subject == entity_id or c.object == entity_id]

    def canonical_hash(self) -> str:
        """Content hash over canonically ordered records; permutation-proof."""
        payload = {
            "entities": [self.entities[k].to_record() for k in sorted(self.entities)],
            "edges": [self.edges[k].to_record() for k in sorted(self.edges)],
            "claims": [c.to_record() for c in self.claims],
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ExtractionResult:
    instances: list[Instance]
    skipped_lines: int = 0


def extract_elements(chunk: DocumentChunk, gateway: LlmGateway,
                     gleanings: int = 1) -> ExtractionResult:
    """Run extraction over one chunk, with optional continuation passes.

    The first pass uses the extraction template, each further gleaning the
    continuation template. Unparseable response lines are counted, never fatal.
    Instances come back tagged with the chunk id.
    """
    if gleanings < 1:
        raise GraphError(f"gleanings must be >= 1, got {gleanings}")
    instances: list[Instance] = []
    skipped = 0
    for round_no in range(gleanings):
        text = gateway.extract(chunk.text, continuation=round_no > 0)
        parsed, bad = parse_records(text)
        skipped += bad
        instances.extend(replace(inst, chunk_id=chunk.chunk_id) for inst in parsed)
    return ExtractionResult(instances, skipped)


def entity_key(name: str, type_: str) -> str:
    return stable_id("entity", normalize_name(name), type_)


def summarize_element(descriptions: Iterable[str], gateway: LlmGateway) -> str:
    """One description per graph element, produced by the gateway.

    Instance descriptions are deduplicated and ordered lexicographically before
    the call so the result is independent of extraction order.
    """
    unique = sorted({d for d in descriptions if d})
    if not unique:
        return ""
    if len(unique) == 1:
        return unique[0]
    return gateway.summarize_element(unique)


def merge_elements(instances: Sequence[Instance], gateway: LlmGateway,
                   chunk_texts: dict[str, str] | None = None) -> KnowledgeGraph:
    """Fold raw instances into a merged graph.

    Entities dedupe on (normalized name, type); the stored display name is the
    lexicographically smallest surface form, so merge order never shows.
    Relationship endpoints resolve by normalized name; instances whose
    endpoints do not resolve, or resolve to the same entity, are dropped and
    counted in diagnostics, as are claims with unresolvable subjects.
    """
    chunk_texts = chunk_texts or {}
    diagnostics = {"dropped_relationships": 0, "dropped_claims": 0}

    entity_names: dict[str, list[str]] = {}
    entity_descs: dict[str, set[str]] = {}
    entity_types: dict[str, str] = {}
    entity_chunks: dict[str, set[str]] = {}
    by_norm: dict[str, set[str]] = {}

    for inst in instances:
        if isinstance(inst, EntityInstance):
            norm = normalize_name(inst.name)
            if not norm:
                continue
            eid = entity_key(inst.name, inst.type)
            entity_names.setdefault(eid, []).append(" ".join(inst.name.split()))
            entity_types[eid] = inst.type
            entity_descs.setdefault(eid, set()).add(inst.description)
            entity_chunks.setdefault(eid, set())
            if inst.chunk_id:
                entity_chunks[eid].add(inst.chunk_id)
            by_norm.setdefault(norm, set()).add(eid)

    def resolve(name: str) -> str | None:
        candidates = by_norm.get(normalize_name(name))
        if not candidates:
            return None
        # Same normalized name under several types: pick deterministically.
        return min(candidates, key=lambda e: (entity_types[e], e))

    edge_descs: dict[tuple[str, str], set[str]] = {}
    edge_counts: dict[tuple[str, str], int] = {}
    edge_chunks: dict[tuple[str, str], set[str]] = {}

    for inst in instances:
        if isinstance(inst, RelationshipInstance):
            src = resolve(inst.source)
            dst = resolve(inst.target)
            if src is None or dst is None or src == dst:
                diagnostics["dropped_relationships"] += 1
                continue
            pair = (src, dst) if src <= dst else (dst, src)
            edge_counts[pair] = edge_counts.get(pair, 0) + 1
            edge_descs.setdefault(pair, set()).add(inst.description)
            edge_chunks.setdefault(pair, set())
            if inst.chunk_id:
                edge_chunks[pair].add(inst.chunk_id)

    graph = KnowledgeGraph(diagnostics=diagnostics)
    for eid in entity_names:
        graph.entities[eid] = Entity(
            entity_id=eid,
            name=min(entity_names[eid]),
            type=entity_types[eid],
            description=summarize_element(entity_descs[eid], gateway),
            source_chunks=entity_chunks[eid],
        )
    for pair in edge_counts:
        graph.edges[pair] = Relationship(
            source=pair[0],
            target=pair[1],
            description=summarize_element(edge_descs[pair], gateway),
            mention_count=edge_counts[pair],
            source_chunks=edge_chunks[pair],
        )

    for inst in instances:
        if isinstance(inst, ClaimInstance):
            subject = resolve(inst.subject)
            if subject is None:
                diagnostics["dropped_claims"] += 1
                continue
            if inst.start_date and inst.end_date and inst.start_date > inst.end_date:
                diagnostics["dropped_claims"] += 1
                continue
            obj = resolve(inst.object) or inst.object
            text = chunk_texts.get(inst.chunk_id, "")
            span = _locate_span(inst.description, text)
            claim_id = stable_id("claim", subject, obj, inst.type,
                                 inst.description, inst.chunk_id)
            graph.claims.append(Claim(
                claim_id=claim_id,
                subject=subject,
                object=obj,
                type=inst.type,
                description=inst.description,
                source_span=span,
                chunk_id=inst.chunk_id,
                start_date=inst.start_date,
                end_date=inst.end_date,
            ))

    graph.claims.sort(key=lambda c: (c.chunk_id, c.source_span, c.claim_id))
    return graph


def _locate_span(description: str, chunk_text: str) -> tuple[int, int]:
    """Span of the claim's source text within its chunk.

    Whitespace differences between the (flattened) description and the chunk
    are tolerated; when the description cannot be located, the whole chunk is
    the span.
    """
    if not description:
        return (0, len(chunk_text))
    idx = chunk_text.find(description)
    if idx >= 0:
        return (idx, idx + len(description))
    collapsed = " ".join(chunk_text.split())
    idx = collapsed.find(description)
    if idx >= 0:
        # Map the collapsed-offset match back through the original text.
        positions = _collapsed_to_original(chunk_text)
        return (positions[idx], positions[idx + len(description) - 1] + 1)
    return (0, len(chunk_text))


def _collapsed_to_original(text: str) -> list[int]:
    """Original index of every character of ``" ".join(text.split())``."""
    mapping: list[int] = []
    i = 0
    n = len(text)
    while i < n and text[i].isspace():
        i += 1
    while i < n:
        if text[i].isspace():
            j = i
            while j < n and text[j].isspace():
                j += 1
            if j < n:
                mapping.append(i)
            i = j
        else:
            mapping.append(i)
            i += 1
    return mapping


def node_degree(graph: KnowledgeGraph, entity_id: str) -> int:
    return graph.degree(entity_id)


def save_graph(graph: KnowledgeGraph, entities_path: Path, relationships_path: Path,
               claims_path: Path) -> None:
    with open(entities_path, "w", encoding="utf-8") as fh:
        for eid in sorted(graph.entities):
            fh.write(json.dumps(graph.entities[eid].to_record(), ensure_ascii=False) + "\n")
    with open(relationships_path, "w", encoding="utf-8") as fh:
        for pair in sorted(graph.edges):
            fh.write(json.dumps(graph.edges[pair].to_record(), ensure_ascii=False) + "\n")
    with open(claims_path, "w", encoding="utf-8") as fh:
        for claim in graph.claims:
            fh.write(json.dumps(claim.to_record(), ensure_ascii=False) + "\n")


def load_graph(entities_path: Path, relationships_path: Path,
               claims_path: Path) -> KnowledgeGraph:
    graph = KnowledgeGraph()
    for line in Path(entities_path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entity = Entity.from_record(json.loads(line))
            graph.entities[entity.entity_id] = entity
    for line in Path(relationships_path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rel = Relationship.from_record(json.loads(line))
            graph.edges[rel.pair] = rel
    for line in Path(claims_path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            graph.claims.append(Claim.from_record(json.loads(line)))
    return graph
