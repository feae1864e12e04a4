"""Chunk embedding and exact top-k cosine retrieval (the vector store).

The bundled embedder is a seeded hash projection of the token multiset into a
fixed-dimension space: each case-folded token deterministically expands to a
pseudo-random vector (BLAKE2 in counter mode) and a text embeds as the sum
over its tokens. No model downloads, identical output on every platform.

Retrieval is an exhaustive scan: at regulatory-corpus scale exactness is
cheap, and it doubles as the contract (results must equal a brute-force
oracle for every k).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .ingest import DocumentChunk
from .tokenizer import Tokenizer, DEFAULT_TOKENIZER


class EmbeddingError(ValueError):
    """Dimension mismatch, duplicate ids, or embedder disagreement."""


class Embedder(Protocol):
    embedder_id: str
    dims: int

    def embed(self, text: str) -> np.ndarray: ...


def _token_vector(token: str, seed: int, dims: int) -> np.ndarray:
    """Deterministic pseudo-random vector for one token, uniform in [-1, 1)."""
    out = np.empty(dims, dtype=np.float64)
    filled = 0
    block = 0
    key = f"{seed}:{token}".encode("utf-8")
    while filled < dims:
        digest = hashlib.blake2b(key + b"\x00" + block.to_bytes(4, "little"),
                                 digest_size=64).digest()
        words = np.frombuffer(digest, dtype="<u4")
        take = min(len(words), dims - filled)
        out[filled : filled + take] = words[:take].astype(np.float64) / 2**31 - 1.0
        filled += take
        block += 1
    return out


class HashEmbedder:
    """Seeded random projection of the case-folded token multiset.

    Empty or token-free text embeds to the zero vector, which the index treats
    as non-retrievable.
    """

    def __init__(self, dims: int = 64, seed: int = 13,
                 tokenizer: Tokenizer = DEFAULT_TOKENIZER):
        self.dims = dims
        self.seed = seed
        self.embedder_id = f"hash-v1-d{dims}-s{seed}"
        self._tokenizer = tokenizer
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dims, dtype=np.float64)
        for tok in self._tokenizer.tokenize(text):
            word = tok.text.casefold()
            cached = self._cache.get(word)
            if cached is None:
                cached = self._cache[word] = _token_vector(word, self.seed, self.dims)
            vec += cached
        return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero for zero-norm operands."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass
class VectorIndex:
    """Immutable after build; one vector per id, all sharing ``dims``."""

    embedder_id: str
    dims: int
    ids: list[str] = field(default_factory=list)
    matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.ids)

    def vector(self, item_id: str) -> np.ndarray:
        return self.matrix[self.ids.index(item_id)]


def index_texts(items: Sequence[tuple[str, str]], embedder: Embedder) -> VectorIndex:
    """Embed (id, text) pairs into an index; ids are stored in ascending order."""
    seen: set[str] = set()
    for item_id, _ in items:
        if item_id in seen:
            raise EmbeddingError(f"duplicate id {item_id!r} in index build")
        seen.add(item_id)
    ordered = sorted(items, key=lambda pair: pair[0])
    ids = [item_id for item_id, _ in ordered]
    if ordered:
        matrix = np.stack([embedder.embed(text) for _, text in ordered])
    else:
        matrix = np.zeros((0, embedder.dims), dtype=np.float64)
    if matrix.shape[1] != embedder.dims:
        raise EmbeddingError(
            f"embedder produced dims {matrix.shape[1]}, declared {embedder.dims}"
        )
    return VectorIndex(
        embedder_id=embedder.embedder_id,
        dims=embedder.dims,
        ids=ids,
        matrix=matrix,
        norms=np.linalg.norm(matrix, axis=1) if len(ids) else np.zeros(0),
    )


def build_index(chunks: Sequence[DocumentChunk], embedder: Embedder,
                summarize_first: bool = False, gateway=None) -> VectorIndex:
    """Embed chunk texts (or their gateway summaries) into a vector index.

    With ``summarize_first`` the gateway's element summarizer produces the text
    that gets embedded; retrieval still returns the original chunk text.
    """
    if not chunks:
        raise EmbeddingError("cannot build an index from zero chunks")
    items = []
    for chunk in chunks:
        text = chunk.text
        if summarize_first:
            if gateway is None:
                raise EmbeddingError("summarize_first requires a gateway")
            text = gateway.summarize_element([chunk.text])
        items.append((chunk.chunk_id, text))
    return index_texts(items, embedder)


def top_k(index: VectorIndex, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact top-k by cosine similarity, descending; ties break on ascending id.

    Zero-norm entries are excluded. A zero-norm query scores 0 everywhere.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dims,):
        raise EmbeddingError(f"query dims {query.shape} != index dims {index.dims}")
    if k < 1:
        raise EmbeddingError(f"k must be >= 1, got {k}")
    qnorm = float(np.linalg.norm(query))
    retrievable = index.norms > 0.0
    scores = np.zeros(len(index.ids))
    if qnorm != 0.0 and retrievable.any():
        scores[retrievable] = (index.matrix[retrievable] @ query) / (
            index.norms[retrievable] * qnorm)
    scored = [(index.ids[i], float(scores[i]))
              for i in range(len(index.ids)) if retrievable[i]]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def save_vectors(index: VectorIndex, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, item_id in enumerate(index.ids):
            rec = {
                "chunk_id": item_id,
                "dims": index.dims,
                "values": [float(x) for x in index.matrix[i]],
                "embedder_id": index.embedder_id,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_vectors(path: str | Path) -> VectorIndex:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    embedder_id = ""
    dims = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            ids.append(rec["chunk_id"])
            rows.append(np.array(rec["values"], dtype=np.float64))
            embedder_id = rec["embedder_id"]
            dims = rec["dims"]
    matrix = np.stack(rows) if rows else np.zeros((0, dims))
    return VectorIndex(
        embedder_id=embedder_id,
        dims=dims,
        ids=ids,
        matrix=matrix,
        norms=np.linalg.norm(matrix, axis=1) if rows else np.zeros(0),
    )
