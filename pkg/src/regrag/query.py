"""Question answering: naive retrieval, graph-global and graph-local search.

All three modes produce an ``Answer`` carrying machine-readable citations and
a trace of every intermediate stage (retrieval scores, grouping, ratings,
packing), token-budgeted throughout. With stub backends and a fixed seed the
whole Answer, trace included, is byte-stable across runs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .community import CommunityHierarchy, CommunityReport
from .embedding import Embedder, VectorIndex, top_k
from .gateway import NO_INFORMATION_ANSWER, LlmGateway
from .graph import KnowledgeGraph
from .ingest import DocumentChunk
from .tokenizer import count_tokens


class QueryError(RuntimeError):
    """Missing artifacts or invalid query parameters."""


class QueryMode(str, Enum):
    naive = "naive"
    graph_global = "graph_global"
    graph_local = "graph_local"


@dataclass(frozen=True)
class ContextItem:
    kind: str  # chunk | entity | relationship | claim | community_report | intermediate_answer
    ref_id: str
    text: str
    score: float
    token_count: int


@dataclass
class RetrievedContext:
    items: list[ContextItem]
    total_tokens: int
    budget_tokens: int


@dataclass
class Answer:
    text: str
    citations: list[dict]  # {ref_id, kind, char_span}
    mode: str
    trace: list[dict]

    def to_record(self) -> dict:
        return {
            "text": self.text,
            "citations": self.citations,
            "mode": self.mode,
            "trace": self.trace,
        }


@dataclass
class IntermediateAnswer:
    text: str
    helpfulness: int
    source_reports: list[str]
    ordinal: int
    token_count: int


def pack_context(items: Sequence[ContextItem], budget_tokens: int) -> RetrievedContext:
    """Greedy prefix packing: take items in the given order while the running
    total fits; the first item that would overflow stops packing entirely."""
    packed: list[ContextItem] = []
    total = 0
    for item in items:
        if total + item.token_count > budget_tokens:
            break
        packed.append(item)
        total += item.token_count
    return RetrievedContext(packed, total, budget_tokens)


def _citation(ref_id: str, kind: str) -> dict:
    return {"ref_id": ref_id, "kind": kind, "char_span": None}


_LOCAL_KIND_SCALE = {
    "relationship": 0.9,
    "claim": 0.8,
    "chunk": 0.7,
    "community_report": 0.6,
}
_KIND_ORDER = {"entity": 0, "relationship": 1, "claim": 2, "chunk": 3,
               "community_report": 4}

DEFAULT_LOCAL_SUB_BUDGETS = {
    "entity": 0.20,
    "relationship": 0.20,
    "claim": 0.10,
    "chunk": 0.40,
    "community_report": 0.20,
}


@dataclass
class QueryEngine:
    """Immutable snapshot of all built artifacts, safe for concurrent queries."""

    chunks: dict[str, DocumentChunk]
    embedder: Embedder
    gateway: LlmGateway
    chunk_index: VectorIndex | None = None
    graph: KnowledgeGraph | None = None
    hierarchy: CommunityHierarchy | None = None
    reports: dict[str, CommunityReport] = field(default_factory=dict)
    entity_index: VectorIndex | None = None
    answer_max_tokens: int = 1024
    intermediate_max_tokens: int = 512
    similarity_floor: float = 0.3
    local_sub_budgets: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LOCAL_SUB_BUDGETS))

    # ------------------------------------------------------------------ naive

    def answer_naive(self, question: str, k: int = 5,
                     budget_tokens: int = 6000) -> Answer:
        if self.chunk_index is None or len(self.chunk_index) == 0:
            raise QueryError("naive mode requires a built embedding index")
        if self.chunk_index.embedder_id != self.embedder.embedder_id:
            raise QueryError(
                f"index embedder {self.chunk_index.embedder_id!r} does not match "
                f"query embedder {self.embedder.embedder_id!r}")
        ranked = top_k(self.chunk_index, self.embedder.embed(question), k)
        items = [
            ContextItem("chunk", cid, self.chunks[cid].text, score,
                        self.chunks[cid].token_count)
            for cid, score in ranked
        ]
        context = pack_context(items, budget_tokens)
        text = self.gateway.answer_from_context(
            "naive_answer", question,
            [(i.ref_id, i.text) for i in context.items], self.answer_max_tokens)
        trace = [
            {"stage": "retrieve", "k": k,
             "scores": [[cid, score] for cid, score in ranked]},
            {"stage": "pack", "packed": [i.ref_id for i in context.items],
             "total_tokens": context.total_tokens, "budget_tokens": budget_tokens},
        ]
        return Answer(
            text=text,
            citations=[_citation(i.ref_id, "chunk") for i in context.items],
            mode=QueryMode.naive.value,
            trace=trace,
        )

    # ----------------------------------------------------------------- global

    def global_search(self, question: str, level: int | None = None,
                      seed: int = 0, map_chunk_tokens: int = 2000,
                      budget_tokens: int = 6000) -> Answer:
        reports = self._reports_at(level)
        if not reports:
            raise QueryError("global mode requires built community reports")

        shuffled = sorted(reports, key=lambda r: r.community_id)
        random.Random(seed).shuffle(shuffled)

        groups: list[list[CommunityReport]] = []
        current: list[CommunityReport] = []
        current_tokens = 0
        for report in shuffled:
            if current and current_tokens + report.token_count > map_chunk_tokens:
                groups.append(current)
                current, current_tokens = [], 0
            current.append(report)
            current_tokens += report.token_count
        if current:
            groups.append(current)

        intermediates: list[IntermediateAnswer] = []
        ratings: list[list] = []
        for ordinal, group in enumerate(groups):
            context = "\n\n".join(r.summary for r in group)
            text, helpfulness = self.gateway.map_answer_and_rate(
                question, context, self.intermediate_max_tokens)
            ratings.append([ordinal, helpfulness])
            if helpfulness > 0:
                intermediates.append(IntermediateAnswer(
                    text=text,
                    helpfulness=helpfulness,
                    source_reports=[r.community_id for r in group],
                    ordinal=ordinal,
                    token_count=count_tokens(text),
                ))

        intermediates.sort(key=lambda ia: (-ia.helpfulness, ia.ordinal))
        items = [
            ContextItem("intermediate_answer", f"group-{ia.ordinal}", ia.text,
                        float(ia.helpfulness), ia.token_count)
            for ia in intermediates
        ]
        context = pack_context(items, budget_tokens)
        packed_ordinals = {int(i.ref_id.split("-", 1)[1]) for i in context.items}
        packed = [ia for ia in intermediates if ia.ordinal in packed_ordinals]

        trace = [
            {"stage": "shuffle", "seed": seed,
             "order": [r.community_id for r in shuffled]},
            {"stage": "map", "groups": [[r.community_id for r in g] for g in groups],
             "ratings": ratings, "map_chunk_tokens": map_chunk_tokens},
            {"stage": "pack",
             "packed": [[f"group-{ia.ordinal}", ia.helpfulness] for ia in packed],
             "total_tokens": context.total_tokens, "budget_tokens": budget_tokens},
        ]
        if not packed:
            return Answer(NO_INFORMATION_ANSWER, [], QueryMode.graph_global.value, trace)

        text = self.gateway.reduce_answer(question, [ia.text for ia in packed],
                                          self.answer_max_tokens)
        citations: list[dict] = []
        seen: set[str] = set()
        for ia in packed:
            for cid in ia.source_reports:
                if cid not in seen:
                    seen.add(cid)
                    citations.append(_citation(cid, "community_report"))
        return Answer(text, citations, QueryMode.graph_global.value, trace)

    # ------------------------------------------------------------------ local

    def local_search(self, question: str, k_entities: int = 10,
                     budget_tokens: int = 6000, naive_k: int = 5) -> Answer:
        if (self.graph is None or self.entity_index is None
                or len(self.entity_index) == 0):
            raise QueryError("local mode requires a built knowledge graph")
        ranked = top_k(self.entity_index, self.embedder.embed(question), k_entities)
        matched = {eid: score for eid, score in ranked if score >= self.similarity_floor}

        if not matched:
            fallback = self.answer_naive(question, k=naive_k, budget_tokens=budget_tokens)
            fallback.mode = QueryMode.graph_local.value
            fallback.trace.insert(0, {
                "stage": "entity_match", "scores": [[e, s] for e, s in ranked],
                "floor": self.similarity_floor, "fallback": "naive"})
            return fallback

        items = self._local_candidates(matched)
        context = self._pack_per_kind(items, budget_tokens)
        text = self.gateway.answer_from_context(
            "local_answer", question,
            [(i.ref_id, i.text) for i in context.items], self.answer_max_tokens)
        trace = [
            {"stage": "entity_match", "scores": [[e, s] for e, s in ranked],
             "floor": self.similarity_floor, "matched": sorted(matched)},
            {"stage": "pack", "packed": [[i.ref_id, i.kind] for i in context.items],
             "total_tokens": context.total_tokens, "budget_tokens": budget_tokens},
        ]
        return Answer(
            text=text,
            citations=[_citation(i.ref_id, i.kind) for i in context.items],
            mode=QueryMode.graph_local.value,
            trace=trace,
        )

    def _local_candidates(self, matched: dict[str, float]) -> list[ContextItem]:
        """Entities keep their similarity; linked items inherit the max
        similarity of their matched entities scaled by a fixed per-kind factor."""
        graph = self.graph
        assert graph is not None
        items: list[ContextItem] = []
        for eid, score in matched.items():
            entity = graph.entities[eid]
            items.append(ContextItem("entity", eid, entity.description, score,
                                     count_tokens(entity.description)))

        for pair, rel in graph.edges.items():
            linked = [matched[e] for e in pair if e in matched]
            if linked:
                score = _LOCAL_KIND_SCALE["relationship"] * max(linked)
                ref = f"{pair[0]}~{pair[1]}"
                items.append(ContextItem("relationship", ref, rel.description,
                                         score, count_tokens(rel.description)))

        for claim in graph.claims:
            linked = [matched[e] for e in (claim.subject, claim.object) if e in matched]
            if linked:
                score = _LOCAL_KIND_SCALE["claim"] * max(linked)
                items.append(ContextItem("claim", claim.claim_id, claim.description,
                                         score, count_tokens(claim.description)))

        chunk_scores: dict[str, float] = {}
        for eid, score in matched.items():
            for cid in graph.entities[eid].source_chunks:
                if cid in self.chunks:
                    chunk_scores[cid] = max(chunk_scores.get(cid, 0.0), score)
        for cid, score in chunk_scores.items():
            chunk = self.chunks[cid]
            items.append(ContextItem("chunk", cid, chunk.text,
                                     _LOCAL_KIND_SCALE["chunk"] * score,
                                     chunk.token_count))

        if self.hierarchy is not None:
            report_scores: dict[str, float] = {}
            for eid, score in matched.items():
                for community in self.hierarchy.containing(eid):
                    if community.community_id in self.reports:
                        prev = report_scores.get(community.community_id, 0.0)
                        report_scores[community.community_id] = max(prev, score)
            for cid, score in report_scores.items():
                report = self.reports[cid]
                items.append(ContextItem("community_report", cid, report.summary,
                                         _LOCAL_KIND_SCALE["community_report"] * score,
                                         report.token_count))

        items.sort(key=lambda i: (-i.score, _KIND_ORDER[i.kind], i.ref_id))
        return items

    def _pack_per_kind(self, items: list[ContextItem], budget_tokens: int) -> RetrievedContext:
        """Priority packing under the total budget with per-kind sub-budgets.

        A kind closes at its first sub-budget overflow; the first total-budget
        overflow stops packing entirely (same rule as ``pack_context``).
        """
        sub_limit = {kind: int(frac * budget_tokens)
                     for kind, frac in self.local_sub_budgets.items()}
        kind_used: dict[str, int] = {}
        closed: set[str] = set()
        packed: list[ContextItem] = []
        total = 0
        for item in items:
            if total + item.token_count > budget_tokens:
                break
            if item.kind in closed:
                continue
            used = kind_used.get(item.kind, 0)
            if used + item.token_count > sub_limit.get(item.kind, budget_tokens):
                closed.add(item.kind)
                continue
            packed.append(item)
            kind_used[item.kind] = used + item.token_count
            total += item.token_count
        return RetrievedContext(packed, total, budget_tokens)

    # -------------------------------------------------------------- dispatch

    def _reports_at(self, level: int | None) -> list[CommunityReport]:
        if not self.reports:
            return []
        if level is None:
            levels = {r.level for r in self.reports.values()}
            level = 1 if 1 in levels else 0
        return sorted((r for r in self.reports.values() if r.level == level),
                      key=lambda r: r.community_id)

    def answer(self, question: str, mode: str, *, k: int = 5, level: int | None = None,
               seed: int = 0, map_chunk_tokens: int = 2000,
               budget_tokens: int = 6000) -> Answer:
        if mode == QueryMode.naive.value:
            return self.answer_naive(question, k=k, budget_tokens=budget_tokens)
        if mode == QueryMode.graph_global.value:
            return self.global_search(question, level=level, seed=seed,
                                      map_chunk_tokens=map_chunk_tokens,
                                      budget_tokens=budget_tokens)
        if mode == QueryMode.graph_local.value:
            return self.local_search(question, budget_tokens=budget_tokens,
                                     naive_k=k)
        raise QueryError(f"unknown query mode {mode!r}")
