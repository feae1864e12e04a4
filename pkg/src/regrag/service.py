"""HTTP JSON API over the corpus store and query engine.

Error bodies are uniformly ``{"code": ..., "message": ..., "details": ...}``.
The chat endpoint and the CLI ``query`` command share ``chat_payload``, so both
produce identical answers for identical inputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .config import EngineConfig
from .gateway import GatewayError
from .ids import stable_id
from .ingest import IngestError, document_from_text
from .query import QueryError, QueryMode
from .store import BuildBusyError, CorpusStore, MissingStageError, StoreError

_MODES = tuple(m.value for m in QueryMode)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, details: Any = None):
        self.status = status
        self.code = code
        self.message = message
        self.details = details


def _error_response(status: int, code: str, message: str, details: Any = None) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message, "details": details})


def session_id_for(question: str, mode: str, config_hash: str) -> str:
    """Deterministic session id when the caller does not supply one."""
    return "s-" + stable_id("session", question, mode, config_hash)


def chat_payload(store: CorpusStore, question: str, mode: str,
                 session_id: str | None = None, level: int | None = None,
                 seed: int | None = None, budgets: dict | None = None) -> dict:
    """Answer a question and return the full chat response body.

    Shared by POST /chat and the CLI so their payloads match byte for byte.
    """
    if mode not in _MODES:
        raise ApiError(422, "unknown_mode",
                       f"mode must be one of {list(_MODES)}", {"mode": mode})
    if not question.strip():
        raise ApiError(400, "empty_question", "question must be non-empty")
    budgets = budgets or {}
    config = store.config
    try:
        engine = store.engine(mode)
        answer = engine.answer(
            question,
            mode,
            k=config.top_k_chunks,
            level=level if level is not None else config.global_level,
            seed=seed if seed is not None else config.seed,
            map_chunk_tokens=int(budgets.get("map_chunk_tokens", config.map_chunk_tokens)),
            budget_tokens=int(budgets.get("answer_budget_tokens", config.answer_budget_tokens)),
        )
    except MissingStageError as exc:
        raise ApiError(409, "index_missing", str(exc), {"mode": mode}) from exc
    except QueryError as exc:
        raise ApiError(409, "index_missing", str(exc), {"mode": mode}) from exc

    sid = session_id or session_id_for(question, mode, config.config_hash())
    payload = {
        "session_id": sid,
        "question": question,
        "mode": mode,
        "config_hash": config.config_hash(),
        "answer": answer.to_record(),
    }
    store.append_session(sid, question, answer.to_record())
    return payload


def create_app(corpus_dir: str | Path, config: EngineConfig | None = None,
               store: CorpusStore | None = None) -> FastAPI:
    store = store or CorpusStore(corpus_dir, config)
    app = FastAPI(title="regrag", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return _error_response(exc.status, exc.code, exc.message, exc.details)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return _error_response(400, "malformed_request", "request body is invalid",
                               json.loads(json.dumps(exc.errors(), default=str)))

    def _json_body(data: dict, *required: str) -> None:
        missing = [k for k in required if k not in data]
        if missing:
            raise ApiError(400, "malformed_request",
                           f"missing fields: {missing}")

    @app.post("/documents")
    async def post_document(request: Request):
        data = await _read_json(request)
        _json_body(data, "title", "text")
        title, text = data["title"], data["text"]
        if not isinstance(title, str) or not isinstance(text, str) or not text.strip():
            raise ApiError(400, "malformed_request", "title and non-empty text are required")
        if len(text.encode("utf-8")) > store.config.max_document_bytes:
            raise ApiError(413, "document_too_large",
                           f"document exceeds {store.config.max_document_bytes} bytes")
        try:
            doc = document_from_text(title, text, toc=data.get("toc"))
            chunk_count = store.ingest_document(doc)
        except IngestError as exc:
            raise ApiError(400, "malformed_document", str(exc)) from exc
        return {"doc_id": doc.doc_id, "chunk_count": chunk_count}

    @app.post("/index/build")
    async def post_build(request: Request):
        data = await _read_json(request)
        stages = data.get("stages")
        if stages is not None and (not isinstance(stages, list)
                                   or not all(isinstance(s, str) for s in stages)):
            raise ApiError(400, "malformed_request", "stages must be a list of names")
        try:
            results = store.build(stages)
        except BuildBusyError as exc:
            raise ApiError(409, "build_busy", str(exc)) from exc
        except MissingStageError as exc:
            raise ApiError(409, "dependency_missing", str(exc)) from exc
        except StoreError as exc:
            raise ApiError(400, "malformed_request", str(exc)) from exc
        manifest = store.load_manifest()
        return {"stages": results, "counts": manifest.counts,
                "config_hash": manifest.config_hash}

    @app.post("/chat")
    async def post_chat(request: Request):
        data = await _read_json(request)
        _json_body(data, "question", "mode")
        try:
            payload = chat_payload(
                store,
                question=str(data["question"]),
                mode=str(data["mode"]),
                session_id=data.get("session_id"),
                level=data.get("level"),
                seed=data.get("seed"),
                budgets=data.get("budgets"),
            )
        except GatewayError as exc:
            raise ApiError(502, "backend_failure", str(exc)) from exc
        return JSONResponse(content=payload)

    @app.get("/chunks/{chunk_id}")
    async def get_chunk(chunk_id: str):
        for chunk in store.load_chunks():
            if chunk.chunk_id == chunk_id:
                return chunk.to_record()
        raise ApiError(404, "not_found", f"chunk {chunk_id} not found")

    @app.get("/entities/{entity_id}")
    async def get_entity(entity_id: str):
        try:
            graph = store.load_graph()
        except MissingStageError as exc:
            raise ApiError(404, "not_found", str(exc)) from exc
        entity = graph.entities.get(entity_id)
        if entity is None:
            raise ApiError(404, "not_found", f"entity {entity_id} not found")
        return entity.to_record()

    @app.get("/communities/{community_id}")
    async def get_community(community_id: str):
        try:
            hierarchy = store.load_hierarchy()
        except MissingStageError as exc:
            raise ApiError(404, "not_found", str(exc)) from exc
        comm = hierarchy.communities.get(community_id)
        if comm is None:
            raise ApiError(404, "not_found", f"community {community_id} not found")
        return comm.to_record()

    @app.get("/reports/{community_id}")
    async def get_report(community_id: str):
        try:
            reports = store.load_reports()
        except MissingStageError as exc:
            raise ApiError(404, "not_found", str(exc)) from exc
        report = reports.get(community_id)
        if report is None:
            raise ApiError(404, "not_found", f"report {community_id} not found")
        return report.to_record()

    @app.get("/graph/stats")
    async def graph_stats():
        try:
            graph = store.load_graph()
        except MissingStageError as exc:
            raise ApiError(404, "not_found", str(exc)) from exc
        histogram: dict[str, int] = {}
        for entity_id in graph.entities:
            d = graph.degree(entity_id)
            histogram[str(d)] = histogram.get(str(d), 0) + 1
        return {
            "entities": len(graph.entities),
            "edges": len(graph.edges),
            "claims": len(graph.claims),
            "total_edge_weight": sum(r.mention_count for r in graph.edges.values()),
            "degree_histogram": dict(sorted(histogram.items(), key=lambda kv: int(kv[0]))),
        }

    @app.get("/health")
    async def health():
        manifest = store.load_manifest()
        return {"status": "ok", "manifest": manifest.to_record()}

    async def _read_json(request: Request) -> dict:
        try:
            data = await request.json()
        except Exception as exc:
            raise ApiError(400, "malformed_request", "body is not valid JSON") from exc
        if not isinstance(data, dict):
            raise ApiError(400, "malformed_request", "body must be a JSON object")
        return data

    app.state.store = store
    return app
