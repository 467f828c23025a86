"""Per-post subgraph retrieval with 0/1/2-hop node sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .kgraph import KnowledgeGraph

Edge = tuple[int, int, int]


@dataclass(frozen=True)
class RetrievalConfig:
    two_hop_cap: int = 100
    two_hop_base: frozenset[int] | None = None

    def __post_init__(self) -> None:
        if self.two_hop_cap < 0:
            raise ValueError("two_hop_cap must be >= 0")


@dataclass(frozen=True)
class Subgraph:
    v0: frozenset[int]
    v1: frozenset[int]
    v2: frozenset[int]
    edges: tuple[Edge, ...]
    node_order: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        order = tuple(sorted(self.v0)) + tuple(sorted(self.v1)) + tuple(sorted(self.v2))
        object.__setattr__(self, "node_order", order)

    @classmethod
    def empty(cls) -> "Subgraph":
        return cls(frozenset(), frozenset(), frozenset(), ())

    def __len__(self) -> int:
        return len(self.node_order)

    @property
    def nodes(self) -> frozenset[int]:
        return self.v0 | self.v1 | self.v2

    def position(self) -> dict[int, int]:
        """node id -> index in ``node_order``."""
        return {nid: i for i, nid in enumerate(self.node_order)}

    def concepts(self, graph: KnowledgeGraph) -> list[str]:
        return [graph.concept(n) for n in self.node_order]

    def to_dict(self, graph: KnowledgeGraph | None = None) -> dict:
        if graph is None:
            return {"v0": sorted(self.v0), "v1": sorted(self.v1), "v2": sorted(self.v2),
                    "edges": [list(e) for e in self.edges]}
        name = graph.concept
        return {
            "v0": [name(n) for n in sorted(self.v0)],
            "v1": [name(n) for n in sorted(self.v1)],
            "v2": [name(n) for n in sorted(self.v2)],
            "edges": [[name(h), graph.relations[r], name(t)] for h, r, t in self.edges],
        }

    def to_json(self, graph: KnowledgeGraph | None = None) -> str:
        return json.dumps(self.to_dict(graph), ensure_ascii=False)


def match_source_nodes(post: Sequence[str], graph: KnowledgeGraph) -> set[int]:
    out = set()
    for tok in post:
        nid = graph.get_node_id(tok.lower())
        if nid is not None:
            out.add(nid)
    return out


def retrieve(post: Sequence[str], graph: KnowledgeGraph, config: RetrievalConfig = RetrievalConfig()) -> Subgraph:
    """Two-hop expansion over out-neighbours.

    Edges between already-reached nodes are kept at both hops.  When more
    than ``two_hop_cap`` 2-hop nodes survive the base filter, the ones with
    the most distinct 1-hop predecessors are kept (ties: smaller node id).
    """
    v0 = match_source_nodes(post, graph)
    if not v0:
        return Subgraph.empty()
    edges: set[Edge] = set()
    v1: set[int] = set()
    for a in v0:
        for r, b in graph.out_edges(a):
            edges.add((a, r, b))
            if b not in v0:
                v1.add(b)
    v2: set[int] = set()
    preds: dict[int, set[int]] = {}
    base = config.two_hop_base
    for a in v1:
        for r, b in graph.out_edges(a):
            if b in v0 or b in v1:
                edges.add((a, r, b))
            elif base is None or b in base:
                v2.add(b)
                edges.add((a, r, b))
                preds.setdefault(b, set()).add(a)
    if len(v2) > config.two_hop_cap:
        ranked = sorted(v2, key=lambda n: (-len(preds[n]), n))
        v2 = set(ranked[: config.two_hop_cap])
        edges = {e for e in edges if e[2] in v0 or e[2] in v1 or e[2] in v2}
    return Subgraph(frozenset(v0), frozenset(v1), frozenset(v2), tuple(sorted(edges)))


class Retriever:
    """Callable binding a graph and a config; memoises per post."""

    def __init__(self, graph: KnowledgeGraph, config: RetrievalConfig = RetrievalConfig()):
        self.graph = graph
        self.config = config
        self._cache: dict[tuple[str, ...], Subgraph] = {}

    def __call__(self, post: Sequence[str]) -> Subgraph:
        key = tuple(post)
        sg = self._cache.get(key)
        if sg is None:
            sg = self._cache[key] = retrieve(key, self.graph, self.config)
        return sg
