"""Engine configuration and its content hash.

One flat config drives ingestion, indexing, and querying. The artifact hash
covers every field that changes what gets persisted, so the staged build can
tell stale artifacts from fresh ones.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


@dataclass
class EngineConfig:
    chunk_tokens: int = 600
    overlap_tokens: int = 100
    embedding_dims: int = 64
    embedding_seed: int = 13
    extractor: str = "stub"              # stub | remote
    gleanings: int = 1
    seed: int = 0                        # community detection + global shuffle
    detection_restarts: int = 16
    max_communities_root: int = 8
    report_budget_tokens: int = 800
    map_chunk_tokens: int = 2000
    answer_budget_tokens: int = 6000
    answer_max_tokens: int = 1024
    intermediate_max_tokens: int = 512
    top_k_chunks: int = 5
    top_k_entities: int = 10
    similarity_floor: float = 0.3
    global_level: int | None = None      # None: level 1 if present, else 0
    summarize_before_embed: bool = False
    backend: str = "stub"                # stub | remote
    backend_base_url: str = ""
    backend_model: str = ""
    backend_api_key_env: str = "REGRAG_API_KEY"
    backend_timeout_s: float = 30.0
    backend_max_concurrency: int = 4
    max_document_bytes: int = 5_000_000
    local_sub_budgets: dict = field(default_factory=lambda: {
        "entity": 0.20, "relationship": 0.20, "claim": 0.10,
        "chunk": 0.40, "community_report": 0.20,
    })

    # Fields that do not change any persisted artifact.
    _SERVING_ONLY = frozenset({
        "backend_api_key_env", "backend_timeout_s", "backend_max_concurrency",
        "max_document_bytes", "top_k_chunks", "top_k_entities",
        "similarity_floor", "global_level", "answer_budget_tokens",
        "answer_max_tokens", "intermediate_max_tokens", "map_chunk_tokens",
        "local_sub_budgets",
    })

    def config_hash(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k not in self._SERVING_ONLY}
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_config(path: str | Path | None) -> EngineConfig:
    """Config from a JSON file; missing keys fall back to defaults."""
    if path is None:
        return EngineConfig()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    known = {f.name for f in fields(EngineConfig) if not f.name.startswith("_")}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return EngineConfig(**data)
