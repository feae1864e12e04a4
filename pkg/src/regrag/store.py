"""Corpus directory: flat-file persistence, manifest, and the staged build.

Layout inside a corpus directory:

    manifest.json        build state: config hash, per-stage status, counts
    chunks.jsonl         one DocumentChunk per line
    vectors.jsonl        chunk embeddings
    entities.jsonl       merged graph entities
    relationships.jsonl  merged graph edges
    claims.jsonl         merged claims
    communities.json     community hierarchy
    reports.jsonl        community reports
    sessions.jsonl       chat transcript (append-only)

Stages run in dependency order (embed and graph need chunks, communities need
graph, reports need communities). Every stage records the config hash and a
fingerprint of its input files; a rebuild with matching fingerprints is a
no-op, so builds are idempotent and resumable per stage.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import community as community_mod
from .community import CommunityHierarchy, CommunityReport
from .config import EngineConfig
from .embedding import HashEmbedder, VectorIndex, build_index, index_texts, load_vectors, save_vectors
from .extraction import Instance
from .gateway import LlmGateway, RemoteBackend, StubBackend
from .graph import KnowledgeGraph, extract_elements, load_graph, merge_elements, save_graph
from .ids import stable_id
from .ingest import DocumentChunk, SourceDocument, chunk_document
from .query import QueryEngine

STAGES = ("embed", "graph", "communities", "reports")
_STAGE_DEPS = {
    "embed": (),
    "graph": (),
    "communities": ("graph",),
    "reports": ("communities",),
}


class StoreError(RuntimeError):
    pass


class MissingStageError(StoreError):
    """A requested operation needs a stage that has not been built."""


class BuildBusyError(StoreError):
    """Another build is running against this corpus."""


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _file_fingerprint(path: Path) -> str:
    if not path.exists():
        return ""
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


@dataclass
class Manifest:
    corpus_id: str
    created_at: str
    config_hash: str
    stages: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    documents: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "created_at": self.created_at,
            "config_hash": self.config_hash,
            "stages": self.stages,
            "counts": self.counts,
            "documents": self.documents,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Manifest":
        return cls(rec["corpus_id"], rec["created_at"], rec["config_hash"],
                   rec.get("stages", {}), rec.get("counts", {}),
                   rec.get("documents", []))


def make_gateway(config: EngineConfig) -> LlmGateway:
    if config.backend == "stub":
        return LlmGateway(backend=StubBackend())
    if config.backend == "remote":
        api_key = os.environ.get(config.backend_api_key_env, "")
        return LlmGateway(backend=RemoteBackend(
            base_url=config.backend_base_url,
            model_id=config.backend_model,
            api_key=api_key,
            timeout_s=config.backend_timeout_s,
            max_concurrency=config.backend_max_concurrency,
        ))
    raise StoreError(f"unknown backend {config.backend!r}")


class CorpusStore:
    """Exclusive writer for one corpus directory; reads are lock-free."""

    def __init__(self, corpus_dir: str | Path, config: EngineConfig | None = None):
        self.dir = Path(corpus_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config or EngineConfig()
        self._build_lock = threading.Lock()
        self._engine_cache: QueryEngine | None = None

    # ------------------------------------------------------------------ paths

    def path(self, name: str) -> Path:
        return self.dir / name

    @property
    def manifest_path(self) -> Path:
        return self.dir / "manifest.json"

    # --------------------------------------------------------------- manifest

    def load_manifest(self) -> Manifest:
        if self.manifest_path.exists():
            return Manifest.from_record(json.loads(self.manifest_path.read_text("utf-8")))
        return Manifest(
            corpus_id=stable_id("corpus", str(self.dir.name)),
            created_at=_utcnow(),
            config_hash=self.config.config_hash(),
        )

    def _save_manifest(self, manifest: Manifest) -> None:
        manifest.config_hash = self.config.config_hash()
        manifest.counts = self._counts()
        self.manifest_path.write_text(
            json.dumps(manifest.to_record(), indent=2, sort_keys=True) + "\n", "utf-8")

    def _counts(self) -> dict:
        def lines(name: str) -> int:
            p = self.path(name)
            if not p.exists():
                return 0
            return sum(1 for line in p.read_text("utf-8").splitlines() if line.strip())

        communities = 0
        if self.path("communities.json").exists():
            communities = len(json.loads(self.path("communities.json").read_text("utf-8"))
                              .get("communities", []))
        return {
            "chunks": lines("chunks.jsonl"),
            "vectors": lines("vectors.jsonl"),
            "entities": lines("entities.jsonl"),
            "relationships": lines("relationships.jsonl"),
            "claims": lines("claims.jsonl"),
            "communities": communities,
            "reports": lines("reports.jsonl"),
        }

    # ---------------------------------------------------------------- ingest

    def ingest_document(self, doc: SourceDocument) -> int:
        """Chunk a document and persist; re-ingesting identical bytes is a no-op.

        Returns the number of chunks for this document.
        """
        chunks = chunk_document(doc, self.config.chunk_tokens, self.config.overlap_tokens)
        existing = [c for c in self.load_chunks() if c.doc_id != doc.doc_id]
        with open(self.path("chunks.jsonl"), "w", encoding="utf-8") as fh:
            for chunk in existing + chunks:
                fh.write(json.dumps(chunk.to_record(), ensure_ascii=False) + "\n")

        manifest = self.load_manifest()
        manifest.documents = [d for d in manifest.documents if d["doc_id"] != doc.doc_id]
        manifest.documents.append({"doc_id": doc.doc_id, "title": doc.title,
                                   "chunk_count": len(chunks)})
        manifest.documents.sort(key=lambda d: d["doc_id"])
        manifest.stages["chunks"] = self._stage_record()
        self._save_manifest(manifest)
        self._engine_cache = None
        return len(chunks)

    def load_chunks(self) -> list[DocumentChunk]:
        path = self.path("chunks.jsonl")
        if not path.exists():
            return []
        return [DocumentChunk.from_record(json.loads(line))
                for line in path.read_text("utf-8").splitlines() if line.strip()]

    # ----------------------------------------------------------------- build

    def _stage_record(self, input_hash: str = "") -> dict:
        return {"status": "done", "config_hash": self.config.config_hash(),
                "input_hash": input_hash, "built_at": _utcnow()}

    def _stage_fresh(self, manifest: Manifest, stage: str, input_hash: str) -> bool:
        rec = manifest.stages.get(stage)
        return bool(rec and rec.get("status") == "done"
                    and rec.get("config_hash") == self.config.config_hash()
                    and rec.get("input_hash") == input_hash)

    def _input_hash(self, stage: str) -> str:
        sources = {
            "embed": ["chunks.jsonl"],
            "graph": ["chunks.jsonl"],
            "communities": ["entities.jsonl", "relationships.jsonl"],
            "reports": ["communities.json", "entities.jsonl", "relationships.jsonl",
                        "claims.jsonl"],
        }[stage]
        return "+".join(_file_fingerprint(self.path(name)) for name in sources)

    def stage_ready(self, stage: str) -> bool:
        manifest = self.load_manifest()
        rec = manifest.stages.get(stage)
        return bool(rec and rec.get("status") == "done")

    def build(self, stages: list[str] | None = None) -> dict:
        """Run the requested stages (all by default) in dependency order.

        Returns {stage: "built" | "skipped"}. Raises ``MissingStageError``
        when a dependency has not been built and was not requested, and
        ``BuildBusyError`` when another build holds the corpus.
        """
        requested = list(stages) if stages is not None else list(STAGES)
        for stage in requested:
            if stage not in STAGES:
                raise StoreError(f"unknown stage {stage!r}; expected one of {STAGES}")
        ordered = [s for s in STAGES if s in requested]

        if not self._build_lock.acquire(blocking=False):
            raise BuildBusyError("a build is already running for this corpus")
        try:
            results: dict[str, str] = {}
            manifest = self.load_manifest()
            if not self.load_chunks():
                raise MissingStageError("no chunks ingested; run ingest first")
            for stage in ordered:
                for dep in _STAGE_DEPS[stage]:
                    if not (manifest.stages.get(dep, {}).get("status") == "done"
                            or dep in results):
                        raise MissingStageError(f"stage {stage!r} requires {dep!r}")
                input_hash = self._input_hash(stage)
                if self._stage_fresh(manifest, stage, input_hash):
                    results[stage] = "skipped"
                    continue
                getattr(self, f"_build_{stage}")()
                manifest.stages[stage] = self._stage_record(self._input_hash(stage))
                self._save_manifest(manifest)
                results[stage] = "built"
            self._save_manifest(manifest)
            self._engine_cache = None
            return results
        finally:
            self._build_lock.release()

    def _embedder(self) -> HashEmbedder:
        return HashEmbedder(dims=self.config.embedding_dims,
                            seed=self.config.embedding_seed)

    def _build_embed(self) -> None:
        chunks = self.load_chunks()
        gateway = make_gateway(self.config)
        index = build_index(chunks, self._embedder(),
                            summarize_first=self.config.summarize_before_embed,
                            gateway=gateway)
        save_vectors(index, self.path("vectors.jsonl"))

    def _build_graph(self) -> None:
        chunks = self.load_chunks()
        gateway = make_gateway(self.config)
        instances: list[Instance] = []
        skipped = 0
        for chunk in chunks:
            result = extract_elements(chunk, gateway, gleanings=self.config.gleanings)
            instances.extend(result.instances)
            skipped += result.skipped_lines
        graph = merge_elements(instances, gateway,
                               chunk_texts={c.chunk_id: c.text for c in chunks})
        graph.diagnostics["skipped_lines"] = skipped
        save_graph(graph, self.path("entities.jsonl"),
                   self.path("relationships.jsonl"), self.path("claims.jsonl"))

    def _build_communities(self) -> None:
        graph = self.load_graph()
        hierarchy = community_mod.detect_communities(
            graph, seed=self.config.seed,
            max_communities_root=self.config.max_communities_root,
            restarts=self.config.detection_restarts)
        self.path("communities.json").write_text(
            json.dumps(hierarchy.to_record(), indent=2, sort_keys=True) + "\n", "utf-8")

    def _build_reports(self) -> None:
        graph = self.load_graph()
        hierarchy = self.load_hierarchy()
        gateway = make_gateway(self.config)
        budget = self.config.report_budget_tokens
        reports: dict[str, CommunityReport] = {}
        for level in range(hierarchy.levels):
            for comm in hierarchy.at_level(level):
                if level == 0:
                    report = community_mod.summarize_leaf_community(
                        comm, graph, gateway, budget)
                else:
                    children = [hierarchy.communities[c] for c in sorted(comm.children)]
                    report = community_mod.summarize_parent_community(
                        comm, children, reports, graph, gateway, budget)
                reports[comm.community_id] = report
        with open(self.path("reports.jsonl"), "w", encoding="utf-8") as fh:
            for cid in sorted(reports, key=lambda c: (reports[c].level, c)):
                fh.write(json.dumps(reports[cid].to_record(), ensure_ascii=False) + "\n")

    # ------------------------------------------------------------------ load

    def load_graph(self) -> KnowledgeGraph:
        for name in ("entities.jsonl", "relationships.jsonl", "claims.jsonl"):
            if not self.path(name).exists():
                raise MissingStageError("graph stage has not been built")
        return load_graph(self.path("entities.jsonl"), self.path("relationships.jsonl"),
                          self.path("claims.jsonl"))

    def load_hierarchy(self) -> CommunityHierarchy:
        path = self.path("communities.json")
        if not path.exists():
            raise MissingStageError("communities stage has not been built")
        return CommunityHierarchy.from_record(json.loads(path.read_text("utf-8")))

    def load_reports(self) -> dict[str, CommunityReport]:
        path = self.path("reports.jsonl")
        if not path.exists():
            raise MissingStageError("reports stage has not been built")
        reports = {}
        for line in path.read_text("utf-8").splitlines():
            if line.strip():
                report = CommunityReport.from_record(json.loads(line))
                reports[report.community_id] = report
        return reports

    def engine(self, mode: str | None = None) -> QueryEngine:
        """Query engine over the last built artifacts (cached until a write).

        ``mode`` checks that the artifacts the mode needs exist, raising
        ``MissingStageError`` otherwise.
        """
        if mode in ("naive", "graph_local") and not self.path("vectors.jsonl").exists():
            raise MissingStageError("embed stage has not been built")
        if mode == "graph_local" and not self.path("entities.jsonl").exists():
            raise MissingStageError("graph stage has not been built")
        if mode == "graph_global" and not self.path("reports.jsonl").exists():
            raise MissingStageError("reports stage has not been built")

        if self._engine_cache is None:
            self._engine_cache = self._build_engine()
        return self._engine_cache

    def _build_engine(self) -> QueryEngine:
        chunks = {c.chunk_id: c for c in self.load_chunks()}
        embedder = self._embedder()
        chunk_index: VectorIndex | None = None
        if self.path("vectors.jsonl").exists():
            chunk_index = load_vectors(self.path("vectors.jsonl"))
        graph = hierarchy = None
        entity_index = None
        reports: dict[str, CommunityReport] = {}
        if self.path("entities.jsonl").exists():
            graph = self.load_graph()
            if graph.entities:
                entity_index = index_texts(
                    [(e.entity_id, e.description) for e in graph.entities.values()],
                    embedder)
        if self.path("communities.json").exists():
            hierarchy = self.load_hierarchy()
        if self.path("reports.jsonl").exists():
            reports = self.load_reports()
        return QueryEngine(
            chunks=chunks,
            embedder=embedder,
            gateway=make_gateway(self.config),
            chunk_index=chunk_index,
            graph=graph,
            hierarchy=hierarchy,
            reports=reports,
            entity_index=entity_index,
            answer_max_tokens=self.config.answer_max_tokens,
            intermediate_max_tokens=self.config.intermediate_max_tokens,
            similarity_floor=self.config.similarity_floor,
            local_sub_budgets=dict(self.config.local_sub_budgets),
        )

    # --------------------------------------------------------------- sessions

    def append_session(self, session_id: str, question: str, answer: dict) -> None:
        rec = {"session_id": session_id, "question": question, "answer": answer,
               "config_hash": self.config.config_hash()}
        with open(self.path("sessions.jsonl"), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def session_history(self, session_id: str) -> list[dict]:
        path = self.path("sessions.jsonl")
        if not path.exists():
            return []
        out = []
        for line in path.read_text("utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                if rec["session_id"] == session_id:
                    out.append(rec)
        return out
