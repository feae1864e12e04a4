import random
from collections import Counter
from dataclasses import replace

import pytest

from regrag.extraction import (ClaimInstance, EntityInstance, RelationshipInstance)
from regrag.gateway import LlmGateway
from regrag.graph import (GraphError, KnowledgeGraph, entity_key, extract_elements,
                          merge_elements, node_degree, load_graph, save_graph,
                          summarize_element)
from regrag.ingest import DocumentChunk

from _util import make_graph

GW = LlmGateway()


def _chunk(text: str, chunk_id: str = "ck1") -> DocumentChunk:
    from regrag.tokenizer import count_tokens
    return DocumentChunk(chunk_id, "doc", ("s",), text, count_tokens(text),
                         (0, len(text)))


def test_extract_nothing_from_lowercase_chunk():
    result = extract_elements(_chunk("no capitalized phrases in here."), GW)
    assert result.instances == []
    assert result.skipped_lines == 0


def test_extract_commission_oversees_office():
    result = extract_elements(_chunk("The European Commission oversees the AI Office."), GW)
    entities = [i for i in result.instances if isinstance(i, EntityInstance)]
    rels = [i for i in result.instances if isinstance(i, RelationshipInstance)]
    assert {e.name for e in entities} == {"European Commission", "AI Office"}
    assert len(rels) == 1
    assert all(i.chunk_id == "ck1" for i in result.instances)


def test_two_gleanings_double_mention_counts():
    chunk = _chunk("The European Commission oversees the AI Office.")
    once = extract_elements(chunk, GW, gleanings=1)
    twice = extract_elements(chunk, GW, gleanings=2)
    assert len(twice.instances) == 2 * len(once.instances)
    graph = merge_elements(twice.instances, GW, chunk_texts={"ck1": chunk.text})
    (edge,) = graph.edges.values()
    assert edge.mention_count == 2


def test_gleanings_must_be_positive():
    with pytest.raises(GraphError):
        extract_elements(_chunk("x"), GW, gleanings=0)


def _entity(name, type_="ORG", desc="d", chunk="c1"):
    return EntityInstance(name, type_, desc, chunk)


def test_undirected_identity_sums_mentions():
    instances = [
        _entity("Alpha Board"), _entity("Beta Board"),
        RelationshipInstance("Alpha Board", "Beta Board", "r1", "c1"),
        RelationshipInstance("Alpha Board", "Beta Board", "r2", "c2"),
        RelationshipInstance("Beta Board", "Alpha Board", "r3", "c3"),
    ]
    graph = merge_elements(instances, GW)
    (edge,) = graph.edges.values()
    assert edge.mention_count == 3
    a = entity_key("Alpha Board", "ORG")
    b = entity_key("Beta Board", "ORG")
    assert graph.edge(a, b) is graph.edge(b, a)
    assert edge.source_chunks == {"c1", "c2", "c3"}


def test_entities_dedupe_by_normalized_name_and_type():
    instances = [
        _entity("The AI Office", desc="union body", chunk="c1"),
        _entity("AI Office", desc="established in the Commission", chunk="c2"),
    ]
    graph = merge_elements(instances, GW)
    (entity,) = graph.entities.values()
    assert entity.name == "AI Office"
    assert entity.source_chunks == {"c1", "c2"}
    assert entity.description == "established in the Commission; union body"


def test_random_relationship_multiset_matches_counting_oracle():
    rng = random.Random(21)
    names = [f"Node {c}" for c in "ABCDEF"]
    instances = [_entity(n, "T") for n in names]
    expected = Counter()
    for _ in range(50):
        a, b = rng.sample(names, 2)
        instances.append(RelationshipInstance(a, b, f"{a}-{b}", "c1"))
        key = tuple(sorted((entity_key(a, "T"), entity_key(b, "T"))))
        expected[key] += 1
    graph = merge_elements(instances, GW)
    assert {pair: rel.mention_count for pair, rel in graph.edges.items()} == dict(expected)
    assert sum(r.mention_count for r in graph.edges.values()) == 50


def test_merge_is_order_independent():
    rng = random.Random(3)
    names = [f"Org {c} Board" for c in "ABCD"]
    instances = [_entity(n) for n in names]
    for _ in range(30):
        a, b = rng.sample(names, 2)
        instances.append(RelationshipInstance(a, b, f"{a}+{b}", f"c{rng.randint(1,4)}"))
        instances.append(ClaimInstance(a, "obligation text", "OBLIGATION",
                                       f"{a} shall act", chunk_id="c1"))
    reference = merge_elements(instances, GW).canonical_hash()
    for _ in range(5):
        shuffled = list(instances)
        rng.shuffle(shuffled)
        assert merge_elements(shuffled, GW).canonical_hash() == reference


def test_claim_with_unresolvable_subject_is_dropped():
    instances = [
        _entity("AI Office"),
        ClaimInstance("Ghost Entity", "x", "OBLIGATION", "desc", chunk_id="c1"),
    ]
    graph = merge_elements(instances, GW)
    assert graph.claims == []
    assert graph.diagnostics["dropped_claims"] == 1


def test_self_loop_relationships_are_dropped():
    instances = [
        _entity("AI Office"),
        RelationshipInstance("The AI Office", "AI Office", "self", "c1"),
    ]
    graph = merge_elements(instances, GW)
    assert graph.edges == {}
    assert graph.diagnostics["dropped_relationships"] == 1


def test_claim_source_span_is_nonempty_substring_of_chunk():
    text = "Intro words. The AI Office shall publish an annual report. Tail."
    result = extract_elements(_chunk(text), GW)
    graph = merge_elements(result.instances, GW, chunk_texts={"ck1": text})
    (claim,) = graph.claims
    start, end = claim.source_span
    assert text[start:end] == claim.description
    assert end > start


def test_summarize_element_rules():
    assert summarize_element(["only one"], GW) == "only one"
    assert summarize_element(["b desc", "a desc", "b desc"], GW) == "a desc; b desc"
    assert summarize_element([], GW) == ""


def test_node_degree_isolated_triangle_and_oracle():
    g = make_graph(1, [])
    assert node_degree(g, "n00") == 0

    tri = make_graph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 5)])
    assert [node_degree(tri, f"n{i:02d}") for i in range(3)] == [2, 2, 2]

    rng = random.Random(8)
    edges = []
    for a in range(9):
        for b in range(a + 1, 9):
            if rng.random() < 0.4:
                edges.append((a, b, rng.randint(1, 4)))
    g = make_graph(9, edges)
    adjacency = {f"n{i:02d}": set() for i in range(9)}
    for a, b, _ in edges:
        adjacency[f"n{a:02d}"].add(f"n{b:02d}")
        adjacency[f"n{b:02d}"].add(f"n{a:02d}")
    for node, nbrs in adjacency.items():
        assert node_degree(g, node) == len(nbrs)
        assert g.neighbors(node) == sorted(nbrs)


def test_degree_of_unknown_entity_raises():
    with pytest.raises(GraphError):
        make_graph(1, []).degree("missing")


def test_graph_persistence_roundtrip(tmp_path):
    text = "The European Commission oversees the AI Office. The AI Office shall report."
    result = extract_elements(_chunk(text), GW, gleanings=2)
    graph = merge_elements(result.instances, GW, chunk_texts={"ck1": text})
    save_graph(graph, tmp_path / "e.jsonl", tmp_path / "r.jsonl", tmp_path / "c.jsonl")
    loaded = load_graph(tmp_path / "e.jsonl", tmp_path / "r.jsonl", tmp_path / "c.jsonl")
    assert loaded.canonical_hash() == graph.canonical_hash()
