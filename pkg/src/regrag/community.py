"""Community hierarchy over the knowledge graph, and budgeted reports.

Detection optimizes weighted modularity with seeded local moving plus a
merge/re-move refinement loop, best-of-N restarts (a Leiden-style scheme
without the aggregation bookkeeping: whole current communities are movable
units during refinement). The converged flat partition is the leaf level;
coarser levels form by local moving over whole leaf groups and only exist
while such merges still improve modularity. Isolated nodes sit in singleton
communities at every level.

Reports are standalone summaries assembled element by element in a documented
priority order and packed into a token budget; the stub gateway emits the
assembly verbatim, which makes report content a pure function of the rule.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from .gateway import LlmGateway
from .graph import KnowledgeGraph
from .tokenizer import count_tokens, truncate_to_tokens

logger = logging.getLogger(__name__)

_GAIN_EPS = 1e-12


@dataclass
class Community:
    community_id: str
    level: int
    member_nodes: set[str]
    children: set[str] = field(default_factory=set)
    parent: str | None = None

    def to_record(self) -> dict:
        return {
            "community_id": self.community_id,
            "level": self.level,
            "member_nodes": sorted(self.member_nodes),
            "children": sorted(self.children),
            "parent": self.parent,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Community":
        return cls(rec["community_id"], rec["level"], set(rec["member_nodes"]),
                   set(rec["children"]), rec["parent"])


@dataclass
class CommunityHierarchy:
    levels: int = 0
    communities: dict[str, Community] = field(default_factory=dict)

    def at_level(self, level: int) -> list[Community]:
        found = [c for c in self.communities.values() if c.level == level]
        return sorted(found, key=lambda c: c.community_id)

    def leaves(self) -> list[Community]:
        return self.at_level(0)

    def containing(self, entity_id: str) -> list[Community]:
        return sorted((c for c in self.communities.values() if entity_id in c.member_nodes),
                      key=lambda c: (c.level, c.community_id))

    def to_record(self) -> dict:
        return {
            "levels": self.levels,
            "communities": [self.communities[k].to_record() for k in sorted(self.communities)],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CommunityHierarchy":
        h = cls(levels=rec["levels"])
        for c in rec["communities"]:
            comm = Community.from_record(c)
            h.communities[comm.community_id] = comm
        return h


@dataclass
class CommunityReport:
    community_id: str
    level: int
    summary: str
    token_count: int
    included_elements: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "community_id": self.community_id,
            "level": self.level,
            "summary": self.summary,
            "token_count": self.token_count,
            "included_elements": self.included_elements,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CommunityReport":
        return cls(rec["community_id"], rec["level"], rec["summary"],
                   rec["token_count"], rec["included_elements"])


# ---------------------------------------------------------------------------
# Modularity and detection
# ---------------------------------------------------------------------------


class _Adjacency:
    """Index-based view of the graph for the optimizer."""

    def __init__(self, graph: KnowledgeGraph):
        self.nodes = sorted(graph.entities)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        self.neighbors: list[list[tuple[int, float]]] = [[] for _ in self.nodes]
        self.strength = [0.0] * len(self.nodes)
        self.total_weight = 0.0
        for (a, b), rel in graph.edges.items():
            w = float(rel.mention_count)
            ia, ib = self.index[a], self.index[b]
            self.neighbors[ia].append((ib, w))
            self.neighbors[ib].append((ia, w))
            self.strength[ia] += w
            self.strength[ib] += w
            self.total_weight += w


def weighted_modularity(adj: _Adjacency, membership: list[int]) -> float:
    """Q = sum_c (e_c/m - (a_c/2m)^2) over the flat partition ``membership``."""
    m = adj.total_weight
    if m == 0.0:
        return 0.0
    intra: dict[int, float] = {}
    strength: dict[int, float] = {}
    for i in range(len(adj.nodes)):
        c = membership[i]
        strength[c] = strength.get(c, 0.0) + adj.strength[i]
        for j, w in adj.neighbors[i]:
            if j > i and membership[j] == c:
                intra[c] = intra.get(c, 0.0) + w
    q = 0.0
    for c, a_c in strength.items():
        q += intra.get(c, 0.0) / m - (a_c / (2.0 * m)) ** 2
    return q


def _move_units(adj: _Adjacency, membership: list[int], units: list[list[int]],
                rng: random.Random) -> bool:
    """One converged round of local moving at the given unit granularity.

    Each unit (a block of nodes that always moves together) is repeatedly
    offered its neighboring communities plus a fresh empty one; it takes the
    move with the largest strictly positive modularity gain. Returns whether
    anything moved.
    """
    m = adj.total_weight
    if m == 0.0:
        return False
    unit_of = {}
    for u, nodes in enumerate(units):
        for i in nodes:
            unit_of[i] = u
    unit_strength = [sum(adj.strength[i] for i in nodes) for nodes in units]
    community_strength: dict[int, float] = {}
    for u, nodes in enumerate(units):
        c = membership[nodes[0]]
        community_strength[c] = community_strength.get(c, 0.0) + unit_strength[u]
    next_label = max(membership, default=-1) + 1

    moved_any = False
    order = list(range(len(units)))
    improved = True
    sweeps = 0
    while improved and sweeps < 1000:
        improved = False
        sweeps += 1
        rng.shuffle(order)
        for u in order:
            nodes = units[u]
            current = membership[nodes[0]]
            k_u = unit_strength[u]
            links: dict[int, float] = {}
            for i in nodes:
                for j, w in adj.neighbors[i]:
                    if unit_of.get(j) == u:
                        continue
                    links[membership[j]] = links.get(membership[j], 0.0) + w
            l_cur = links.get(current, 0.0)
            a_cur = community_strength.get(current, 0.0)

            def gain(target: int, l_target: float, a_target: float) -> float:
                # a_cur includes the unit itself; a_target never does.
                return ((l_target - l_cur) / m
                        - k_u * (a_target - (a_cur - k_u)) / (2.0 * m * m))

            best_target = current
            best_gain = 0.0
            for c in sorted(links):
                if c == current:
                    continue
                g = gain(c, links[c], community_strength.get(c, 0.0))
                if g > best_gain + _GAIN_EPS:
                    best_gain = g
                    best_target = c
            g_empty = gain(next_label, 0.0, 0.0)
            if g_empty > best_gain + _GAIN_EPS:
                best_gain = g_empty
                best_target = next_label
            if best_target != current and best_gain > _GAIN_EPS:
                for i in nodes:
                    membership[i] = best_target
                community_strength[current] = a_cur - k_u
                community_strength[best_target] = community_strength.get(best_target, 0.0) + k_u
                if best_target == next_label:
                    next_label += 1
                improved = True
                moved_any = True
    return moved_any


def _groups(membership: list[int]) -> list[list[int]]:
    by_label: dict[int, list[int]] = {}
    for i, c in enumerate(membership):
        by_label.setdefault(c, []).append(i)
    # Canonical order: by smallest member index.
    return sorted(by_label.values(), key=lambda g: g[0])


def _refine_blocks(adj: _Adjacency, membership: list[int],
                   rng: random.Random) -> list[list[int]]:
    """Split communities into connected sub-blocks (single-pass merging).

    Every node starts alone; in random order, still-singleton nodes merge into
    the best positive-gain sub-community within their own community. The
    resulting blocks are the movable units for the next phase, which is what
    lets pairs or larger groups escape together.
    """
    m = adj.total_weight
    n = len(adj.nodes)
    sub = list(range(n))
    sub_size = [1] * n
    sub_strength = list(adj.strength)
    order = list(range(n))
    rng.shuffle(order)
    for i in order:
        if sub_size[sub[i]] > 1:
            continue
        links: dict[int, float] = {}
        for j, w in adj.neighbors[i]:
            if membership[j] == membership[i] and sub[j] != sub[i]:
                links[sub[j]] = links.get(sub[j], 0.0) + w
        k_i = adj.strength[i]
        best_label = sub[i]
        best_gain = 0.0
        for label in sorted(links):
            g = links[label] / m - k_i * sub_strength[label] / (2.0 * m * m)
            if g > best_gain + _GAIN_EPS:
                best_gain = g
                best_label = label
        if best_label != sub[i]:
            sub_size[sub[i]] -= 1
            sub_strength[sub[i]] -= k_i
            sub[i] = best_label
            sub_size[best_label] += 1
            sub_strength[best_label] += k_i
    return _groups(sub)


def _plateau_kick(adj: _Adjacency, membership: list[int], rng: random.Random) -> bool:
    """One sweep of zero-gain node moves (strict moving is already converged).

    Opens paths across modularity plateaus; the caller keeps the result only
    when subsequent strict moving actually improves.
    """
    m = adj.total_weight
    if m == 0.0:
        return False
    community_strength: dict[int, float] = {}
    for i, c in enumerate(membership):
        community_strength[c] = community_strength.get(c, 0.0) + adj.strength[i]
    order = list(range(len(adj.nodes)))
    rng.shuffle(order)
    kicked = False
    for i in order:
        current = membership[i]
        k_i = adj.strength[i]
        links: dict[int, float] = {}
        for j, w in adj.neighbors[i]:
            links[membership[j]] = links.get(membership[j], 0.0) + w
        l_cur = links.get(current, 0.0)
        a_cur = community_strength.get(current, 0.0)
        for c in sorted(links):
            if c == current:
                continue
            gain = ((links[c] - l_cur) / m
                    - k_i * (community_strength.get(c, 0.0) - (a_cur - k_i)) / (2.0 * m * m))
            if abs(gain) <= _GAIN_EPS:
                membership[i] = c
                community_strength[current] = a_cur - k_i
                community_strength[c] = community_strength.get(c, 0.0) + k_i
                kicked = True
                break
    return kicked


def _converge_strict(adj: _Adjacency, membership: list[int], rng: random.Random) -> None:
    n = len(adj.nodes)
    singletons = [[i] for i in range(n)]
    moved = True
    while moved:
        moved = _move_units(adj, membership, singletons, rng)
        blocks = _refine_blocks(adj, membership, rng)
        moved = _move_units(adj, membership, blocks, rng) or moved
        moved = _move_units(adj, membership, _groups(membership), rng) or moved


_MAX_PLATEAU_KICKS = 8


def _optimize_leaf(adj: _Adjacency, seed: int, restarts: int) -> list[int]:
    """Best-of-N restarts of local moving, block refinement, and plateau kicks."""
    n = len(adj.nodes)
    best: list[int] | None = None
    best_q = float("-inf")
    for r in range(restarts):
        rng = random.Random((seed * 1_000_003 + r) & 0xFFFFFFFF)
        membership = list(range(n))
        _converge_strict(adj, membership, rng)
        for _ in range(_MAX_PLATEAU_KICKS):
            q_before = weighted_modularity(adj, membership)
            trial = list(membership)
            if not _plateau_kick(adj, trial, rng):
                break
            _converge_strict(adj, trial, rng)
            if weighted_modularity(adj, trial) > q_before + _GAIN_EPS:
                membership = trial
            else:
                break
        q = weighted_modularity(adj, membership)
        if q > best_q + _GAIN_EPS:
            best_q = q
            best = list(membership)
    assert best is not None
    return best


def detect_communities(graph: KnowledgeGraph, seed: int = 0,
                       max_communities_root: int = 8,
                       restarts: int = 16) -> CommunityHierarchy:
    """Multi-level community hierarchy; deterministic for a given seed.

    Level 0 is the converged leaf partition. Coarser levels are added by
    moving whole communities while the level is wider than
    ``max_communities_root`` and some merge still improves modularity.
    An empty graph yields an empty hierarchy.
    """
    if not graph.entities:
        return CommunityHierarchy(levels=0)

    adj = _Adjacency(graph)
    n = len(adj.nodes)
    partitions = [_optimize_leaf(adj, seed, restarts)]

    level = 0
    while True:
        current = partitions[-1]
        width = len(set(current))
        if width <= max_communities_root:
            break
        level += 1
        rng = random.Random((seed * 7_368_787 + level) & 0xFFFFFFFF)
        membership = list(current)
        if not _move_units(adj, membership, _groups(membership), rng):
            break
        partitions.append(membership)

    return _build_hierarchy(adj, partitions)


def _build_hierarchy(adj: _Adjacency, partitions: list[list[int]]) -> CommunityHierarchy:
    hierarchy = CommunityHierarchy(levels=len(partitions))
    previous_ids: dict[int, str] = {}  # leader node index -> community_id
    for level, membership in enumerate(partitions):
        groups = _groups(membership)
        current_ids: dict[int, str] = {}
        for ordinal, nodes in enumerate(groups):
            cid = f"c{level}-{ordinal}"
            members = {adj.nodes[i] for i in nodes}
            hierarchy.communities[cid] = Community(cid, level, members)
            for i in nodes:
                current_ids[i] = cid
        if level > 0:
            for i, cid in previous_ids.items():
                child = hierarchy.communities[cid]
                parent = hierarchy.communities[current_ids[i]]
                if child.parent is None:
                    child.parent = parent.community_id
                    parent.children.add(cid)
        previous_ids = current_ids
    return hierarchy


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class _Element:
    kind: str
    ref_id: str
    text: str


def edge_pair_id(a: str, b: str) -> str:
    return f"{a}~{b}" if a <= b else f"{b}~{a}"


def _leaf_elements(members: set[str], graph: KnowledgeGraph) -> list[_Element]:
    """Element sequence in the documented priority order.

    Internal edges sort by degree(source)+degree(target) descending, ties by
    descending weight then ascending pair id; each edge contributes its
    endpoints' descriptions, their claims, then the edge description, all
    deduplicated. Members no internal edge reaches follow by descending
    degree.
    """
    degree: dict[str, int] = {m: 0 for m in members}
    for a, b in graph.edges:
        if a in degree:
            degree[a] += 1
        if b in degree:
            degree[b] += 1
    internal = [rel for pair, rel in graph.edges.items()
                if pair[0] in members and pair[1] in members]
    internal.sort(key=lambda r: (-(degree[r.source] + degree[r.target]),
                                 -r.mention_count, r.pair))
    elements: list[_Element] = []
    seen: set[tuple[str, str]] = set()

    def add(kind: str, ref_id: str, text: str) -> None:
        if (kind, ref_id) not in seen and text:
            seen.add((kind, ref_id))
            elements.append(_Element(kind, ref_id, text))

    def add_entity_with_claims(entity_id: str) -> None:
        add("entity", entity_id, graph.entities[entity_id].description)
        for claim in graph.claims:
            if claim.subject == entity_id:
                add("claim", claim.claim_id, claim.description)

    for rel in internal:
        add_entity_with_claims(rel.source)
        add_entity_with_claims(rel.target)
        add("relationship", edge_pair_id(rel.source, rel.target), rel.description)

    covered = {e for rel in internal for e in (rel.source, rel.target)}
    rest = sorted(members - covered, key=lambda e: (-degree[e], e))
    for entity_id in rest:
        add_entity_with_claims(entity_id)
    return elements


def _pack_elements(elements: list[_Element], budget_tokens: int) -> tuple[list[_Element], int]:
    """Maximal prefix whose cumulative token count fits the budget."""
    packed: list[_Element] = []
    total = 0
    for element in elements:
        tokens = count_tokens(element.text)
        if total + tokens > budget_tokens:
            break
        packed.append(element)
        total += tokens
    return packed, total


def _finish_report(community: Community, packed: list[_Element],
                   gateway: LlmGateway, budget_tokens: int) -> CommunityReport:
    assembly = "\n".join(e.text for e in packed)
    summary = gateway.summarize_community(assembly, budget_tokens) if assembly else ""
    summary = truncate_to_tokens(summary, budget_tokens)
    return CommunityReport(
        community_id=community.community_id,
        level=community.level,
        summary=summary,
        token_count=count_tokens(summary),
        included_elements=[{"kind": e.kind, "ref_id": e.ref_id} for e in packed],
    )


def summarize_leaf_community(community: Community, graph: KnowledgeGraph,
                             gateway: LlmGateway, budget_tokens: int) -> CommunityReport:
    if budget_tokens <= 0:
        raise ValueError("budget_tokens must be positive")
    elements = _leaf_elements(community.member_nodes, graph)
    packed, _ = _pack_elements(elements, budget_tokens)
    return _finish_report(community, packed, gateway, budget_tokens)


def summarize_parent_community(community: Community, children: list[Community],
                               child_reports: dict[str, CommunityReport],
                               graph: KnowledgeGraph, gateway: LlmGateway,
                               budget_tokens: int) -> CommunityReport:
    """Parent report: leaf procedure when everything fits, else substitute the
    longest children's element summaries with their (shorter) reports until
    the assembly fits the budget."""
    if budget_tokens <= 0:
        raise ValueError("budget_tokens must be positive")
    union_elements = _leaf_elements(community.member_nodes, graph)
    union_total = sum(count_tokens(e.text) for e in union_elements)
    if union_total <= budget_tokens:
        packed, _ = _pack_elements(union_elements, budget_tokens)
        return _finish_report(community, packed, gateway, budget_tokens)

    child_elements = {c.community_id: _leaf_elements(c.member_nodes, graph) for c in children}
    child_sums = {cid: sum(count_tokens(e.text) for e in elems)
                  for cid, elems in child_elements.items()}

    substituted: set[str] = set()
    ordered = sorted(children, key=lambda c: (-child_sums[c.community_id], c.community_id))

    def assembly_total() -> int:
        total = 0
        for child in children:
            cid = child.community_id
            if cid in substituted:
                total += child_reports[cid].token_count
            else:
                total += child_sums[cid]
        return total

    for child in ordered:
        if assembly_total() <= budget_tokens:
            break
        substituted.add(child.community_id)

    elements: list[_Element] = []
    for child in sorted(children, key=lambda c: c.community_id):
        cid = child.community_id
        if cid in substituted:
            elements.append(_Element("community_report", cid, child_reports[cid].summary))
        else:
            elements.extend(child_elements[cid])

    if assembly_total() > budget_tokens:
        logger.warning("community %s: assembly exceeds budget %d even with all "
                       "children substituted; truncating", community.community_id,
                       budget_tokens)
    packed, _ = _pack_elements(elements, budget_tokens)
    return _finish_report(community, packed, gateway, budget_tokens)
