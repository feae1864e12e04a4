import json
import random

import numpy as np
import pytest

from regrag.embedding import (EmbeddingError, HashEmbedder, build_index, cosine,
                              index_texts, load_vectors, save_vectors, top_k)
from regrag.gateway import LlmGateway


@pytest.fixture(scope="module")
def embedder():
    return HashEmbedder()


def test_same_text_embeds_identically(embedder):
    a = embedder.embed("high-risk AI systems in the Union")
    b = embedder.embed("high-risk AI systems in the Union")
    assert np.array_equal(a, b)


def test_empty_text_is_zero_vector(embedder):
    assert np.all(embedder.embed("") == 0.0)
    assert np.all(embedder.embed("   \n\t") == 0.0)


def test_plural_variant_stays_close(embedder):
    sim = cosine(embedder.embed("high-risk AI system"),
                 embedder.embed("high-risk AI systems"))
    assert sim >= 0.7


def test_case_folding_makes_embeddings_case_insensitive(embedder):
    assert np.array_equal(embedder.embed("AI OFFICE"), embedder.embed("ai office"))


def test_fixture_index_has_one_entry_per_chunk(fixture_chunks, embedder):
    index = build_index(fixture_chunks, embedder)
    assert len(index) == 12
    assert index.dims == 64


def test_summarize_first_with_stub_gateway_is_identity(fixture_chunks, embedder):
    plain = build_index(fixture_chunks, embedder)
    summarized = build_index(fixture_chunks, embedder, summarize_first=True,
                             gateway=LlmGateway())
    assert plain.ids == summarized.ids
    assert np.array_equal(plain.matrix, summarized.matrix)


def test_duplicate_ids_rejected(embedder):
    with pytest.raises(EmbeddingError):
        index_texts([("a", "x"), ("a", "y")], embedder)


def test_empty_chunk_list_rejected(embedder):
    with pytest.raises(EmbeddingError):
        build_index([], embedder)


def test_query_equal_to_indexed_vector_scores_one(embedder):
    index = index_texts([("a", "conformity assessment"), ("b", "risk management")],
                        embedder)
    ranked = top_k(index, embedder.embed("conformity assessment"), 1)
    assert ranked[0][0] == "a"
    assert abs(ranked[0][1] - 1.0) <= 1e-9


def test_orthogonal_query_gives_zero_scores_in_id_order():
    index = index_texts([("b", "x"), ("a", "y"), ("c", "z")], HashEmbedder(dims=4, seed=1))
    # Zero query is orthogonal to everything and scores 0 by convention.
    ranked = top_k(index, np.zeros(4), 3)
    assert ranked == [("a", 0.0), ("b", 0.0), ("c", 0.0)]


def test_zero_norm_entries_are_not_retrievable(embedder):
    index = index_texts([("empty", ""), ("full", "data governance")], embedder)
    ranked = top_k(index, embedder.embed("data governance"), 5)
    assert [r[0] for r in ranked] == ["full"]


def test_dimension_mismatch_rejected(embedder):
    index = index_texts([("a", "x")], embedder)
    with pytest.raises(EmbeddingError):
        top_k(index, np.zeros(3), 1)
    with pytest.raises(EmbeddingError):
        top_k(index, embedder.embed("x"), 0)


def _brute_force(index, query, k):
    scored = []
    for i, item_id in enumerate(index.ids):
        v = index.matrix[i]
        n = float(np.linalg.norm(v))
        if n == 0.0:
            continue
        qn = float(np.linalg.norm(query))
        score = 0.0 if qn == 0.0 else float(np.dot(v, query) / (n * qn))
        scored.append((item_id, score))
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def test_top_k_matches_exhaustive_oracle_on_random_vectors():
    rng = np.random.default_rng(5)
    from regrag.embedding import VectorIndex
    matrix = rng.normal(size=(200, 64))
    ids = [f"v{i:03d}" for i in range(200)]
    index = VectorIndex("test", 64, ids, matrix, np.linalg.norm(matrix, axis=1))
    for k in (1, 3, 10, 200, 999):
        query = rng.normal(size=64)
        got = top_k(index, query, k)
        want = _brute_force(index, query, k)
        assert [g[0] for g in got] == [w[0] for w in want]  # set and order
        assert all(abs(g[1] - w[1]) <= 1e-12 for g, w in zip(got, want))


def test_cosine_symmetry_and_scale_invariance():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a = rng.normal(size=16)
        b = rng.normal(size=16)
        c = rng.uniform(0.1, 9.0)
        assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-12)
        assert cosine(a, c * b) == pytest.approx(cosine(a, b), abs=1e-9)
        assert -1.0 - 1e-9 <= cosine(a, b) <= 1.0 + 1e-9


def test_persistence_roundtrip_gives_bit_identical_rankings(tmp_path, fixture_chunks, embedder):
    index = build_index(fixture_chunks, embedder)
    path = tmp_path / "vectors.jsonl"
    save_vectors(index, path)
    loaded = load_vectors(path)
    assert loaded.ids == index.ids
    assert loaded.embedder_id == index.embedder_id
    assert np.array_equal(loaded.matrix, index.matrix)
    query = embedder.embed("Which AI systems are considered high risk?")
    assert top_k(index, query, 12) == top_k(loaded, query, 12)
    rec = json.loads(path.read_text().splitlines()[0])
    assert set(rec) == {"chunk_id", "dims", "values", "embedder_id"}
