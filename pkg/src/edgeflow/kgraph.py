"""Typed directed concept graph: loading, enhancement, ablation, coverage."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .aligner import NULL, AlignmentTable, top_k_targets
from .corpus import CorpusFormatError, DialogPair, PosLexicon, noun_tokens, normalize_token, token_counts
from .fsutil import atomic_write_text

DIALOG_FLOW_TO = "DialogFlowTo"
SELF_TO = "SelfTO"
FROM_TEXT = "FromText"
TO_TEXT = "ToText"
RESERVED_RELATIONS = (DIALOG_FLOW_TO, SELF_TO, FROM_TEXT, TO_TEXT)

Triple = tuple[str, str, str]


class GraphError(ValueError):
    pass


class KnowledgeGraph:
    """Deduplicated typed multigraph over string concepts.

    Node and relation ids are dense integers in insertion order.  The four
    reserved relations always hold ids 0..3.  Treat instances as immutable;
    :func:`enhance` and :func:`ablate_edges` build new graphs.
    """

    def __init__(self, concepts: Iterable[str] = (), relations: Iterable[str] = (),
                 edges: Iterable[tuple[int, int, int]] = ()):
        self.concepts: list[str] = []
        self._node_ids: dict[str, int] = {}
        self.relations: list[str] = []
        self._rel_ids: dict[str, int] = {}
        self.edges: list[tuple[int, int, int]] = []
        self._edge_set: set[tuple[int, int, int]] = set()
        self._out: list[list[tuple[int, int]]] = []
        self._in: list[list[tuple[int, int]]] = []
        self._linked: set[tuple[int, int]] = set()
        for r in RESERVED_RELATIONS:
            self._add_relation(r)
        for r in relations:
            self._add_relation(r)
        for c in concepts:
            self._add_node(c)
        for h, r, t in edges:
            self._add_edge(h, r, t)

    # construction helpers; only used while building
    def _add_node(self, concept: str) -> int:
        nid = self._node_ids.get(concept)
        if nid is None:
            nid = len(self.concepts)
            self.concepts.append(concept)
            self._node_ids[concept] = nid
            self._out.append([])
            self._in.append([])
        return nid

    def _add_relation(self, name: str) -> int:
        rid = self._rel_ids.get(name)
        if rid is None:
            rid = len(self.relations)
            self.relations.append(name)
            self._rel_ids[name] = rid
        return rid

    def _add_edge(self, h: int, r: int, t: int) -> bool:
        if not (0 <= h < len(self.concepts) and 0 <= t < len(self.concepts)):
            raise GraphError(f"edge ({h}, {r}, {t}) has an unregistered endpoint")
        if not 0 <= r < len(self.relations):
            raise GraphError(f"edge ({h}, {r}, {t}) has an unregistered relation")
        key = (h, r, t)
        if key in self._edge_set:
            return False
        self._edge_set.add(key)
        self.edges.append(key)
        self._out[h].append((r, t))
        self._in[t].append((r, h))
        self._linked.add((h, t))
        return True

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> "KnowledgeGraph":
        g = cls()
        for h, r, t in triples:
            g._add_edge(g._add_node(h), g._add_relation(r), g._add_node(t))
        return g

    # queries
    @property
    def num_nodes(self) -> int:
        return len(self.concepts)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def base_relations(self) -> list[str]:
        return self.relations[len(RESERVED_RELATIONS):]

    def has_node(self, concept: str) -> bool:
        return concept in self._node_ids

    def node_id(self, concept: str) -> int:
        return self._node_ids[concept]

    def get_node_id(self, concept: str) -> int | None:
        return self._node_ids.get(concept)

    def concept(self, nid: int) -> str:
        return self.concepts[nid]

    def relation_id(self, name: str) -> int:
        return self._rel_ids[name]

    def out_edges(self, nid: int) -> list[tuple[int, int]]:
        """(relation, tail) pairs leaving ``nid``, in insertion order."""
        return self._out[nid]

    def in_edges(self, nid: int) -> list[tuple[int, int]]:
        return self._in[nid]

    def has_link(self, head: int, tail: int) -> bool:
        """True when any relation connects head -> tail."""
        return (head, tail) in self._linked

    def has_triple(self, head: str, relation: str, tail: str) -> bool:
        try:
            key = (self._node_ids[head], self._rel_ids[relation], self._node_ids[tail])
        except KeyError:
            return False
        return key in self._edge_set

    def triples(self) -> list[Triple]:
        return [(self.concepts[h], self.relations[r], self.concepts[t]) for h, r, t in self.edges]

    def edge_set(self) -> set[Triple]:
        return set(self.triples())

    def node_set(self) -> set[str]:
        return set(self.concepts)

    def same_tables(self, other: "KnowledgeGraph") -> bool:
        return (self.concepts == other.concepts and self.relations == other.relations
                and self.edges == other.edges)

    def copy(self) -> "KnowledgeGraph":
        return KnowledgeGraph(self.concepts, self.base_relations, self.edges)

    def to_tsv(self) -> str:
        lines = [f"@relation\t{r}\n" for r in self.base_relations]
        lines += [f"@node\t{c}\n" for c in self.concepts]
        lines += [f"{h}\t{r}\t{t}\n" for h, r, t in self.triples()]
        return "".join(lines)

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_tsv())

    def __repr__(self) -> str:
        return f"KnowledgeGraph(nodes={self.num_nodes}, edges={self.num_edges}, relations={self.num_relations})"


def load_triples(path: str | Path) -> KnowledgeGraph:
    """Read ``head<TAB>relation<TAB>tail`` lines.

    ``@node<TAB>c`` and ``@relation<TAB>r`` lines declare isolated nodes and
    unused relations so saved graphs round-trip exactly; ``#`` starts a comment.
    """
    g = KnowledgeGraph()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.rstrip("\n")
            if not text.strip() or text.startswith("#"):
                continue
            parts = text.split("\t")
            try:
                if parts[0] == "@node" and len(parts) == 2:
                    g._add_node(normalize_token(parts[1]))
                elif parts[0] == "@relation" and len(parts) == 2 and parts[1].strip():
                    g._add_relation(parts[1].strip())
                elif len(parts) == 3 and parts[1].strip():
                    h = g._add_node(normalize_token(parts[0]))
                    r = g._add_relation(parts[1].strip())
                    g._add_edge(h, r, g._add_node(normalize_token(parts[2])))
                else:
                    raise ValueError("expected 'head<TAB>relation<TAB>tail'")
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
    return g


@dataclass(frozen=True)
class EnhancementConfig:
    node_percentile: float = 0.20
    alignment_top_k: int = 5
    new_relation: str = DIALOG_FLOW_TO

    def __post_init__(self) -> None:
        if not 0.0 < self.node_percentile <= 1.0:
            raise ValueError("node_percentile must lie in (0, 1]")
        if self.alignment_top_k < 1:
            raise ValueError("alignment_top_k must be >= 1")


def frequency_threshold(graph: KnowledgeGraph, counts: Counter, m: float) -> int:
    """Corpus frequency at the top-``m`` percentile of the graph's nodes."""
    if graph.num_nodes == 0:
        return 0
    freqs = sorted((counts.get(c, 0) for c in graph.concepts), reverse=True)
    rank = max(1, math.ceil(round(m * len(freqs), 9)))
    return freqs[min(rank, len(freqs)) - 1]


def extract_new_nodes(pairs: Sequence[DialogPair], graph: KnowledgeGraph, lexicon: PosLexicon,
                      config: EnhancementConfig = EnhancementConfig()) -> set[str]:
    counts = token_counts(pairs)
    threshold = frequency_threshold(graph, counts, config.node_percentile)
    return {t for t in noun_tokens(pairs, lexicon) if not graph.has_node(t) and counts[t] > threshold}


def extract_new_edges(table: AlignmentTable, graph: KnowledgeGraph,
                      config: EnhancementConfig = EnhancementConfig()) -> list[Triple]:
    """Top-k aligned targets per source become new edges of ``config.new_relation``.

    Skips self pairs, pairs already linked by any relation, and endpoints the
    graph does not know (including the NULL source).
    """
    out = []
    for s in table.sources():
        if s == NULL or not graph.has_node(s):
            continue
        sid = graph.node_id(s)
        for t, _ in top_k_targets(table, s, config.alignment_top_k):
            if t == s or not graph.has_node(t) or graph.has_link(sid, graph.node_id(t)):
                continue
            out.append((s, config.new_relation, t))
    return out


def enhance(graph: KnowledgeGraph, new_nodes: Iterable[str], new_edges: Iterable[Triple]) -> KnowledgeGraph:
    g = graph.copy()
    for c in sorted(set(new_nodes)):
        g._add_node(c)
    for h, r, t in new_edges:
        if not g.has_node(h) or not g.has_node(t):
            missing = h if not g.has_node(h) else t
            raise GraphError(f"edge ({h}, {r}, {t}) has dangling endpoint {missing!r}")
        g._add_edge(g.node_id(h), g._add_relation(r), g.node_id(t))
    return g


def ablate_edges(graph: KnowledgeGraph, table: AlignmentTable, bottom_fraction: float) -> KnowledgeGraph:
    """Drop edges from each aligned source to its bottom-n ranked targets.

    With L ranked targets, the last floor(n * L) are the bottom fraction.
    """
    if not 0.0 <= bottom_fraction <= 1.0:
        raise ValueError("bottom_fraction must lie in [0, 1]")
    doomed: set[tuple[int, int]] = set()
    for s in table.sources():
        if s == NULL or not graph.has_node(s):
            continue
        ranked = table.ranked(s)
        cut = math.floor(bottom_fraction * len(ranked) + 1e-9)
        if cut == 0:
            continue
        sid = graph.node_id(s)
        for t, _ in ranked[len(ranked) - cut:]:
            if graph.has_node(t):
                doomed.add((sid, graph.node_id(t)))
    kept = [e for e in graph.edges if (e[0], e[2]) not in doomed]
    return KnowledgeGraph(graph.concepts, graph.base_relations, kept)


@dataclass(frozen=True)
class CoverageStats:
    num_pairs: int
    nodes: int
    edges: int
    response_nodes: float
    amount: tuple[float, float, float]
    golden: tuple[float, float, float]

    def to_dict(self) -> dict:
        d = {"pairs": self.num_pairs, "nodes": self.nodes, "edges": self.edges,
             "response_nodes": self.response_nodes}
        for h in range(3):
            d[f"{h}-hop"] = {"amount": self.amount[h], "golden": self.golden[h]}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def coverage_stats(graph: KnowledgeGraph, pairs: Sequence[DialogPair], retriever: Callable) -> CoverageStats:
    """Per-pair averages of Table-1 style coverage.

    ``retriever(post)`` must return a subgraph with ``v0``/``v1``/``v2`` node
    id sets over ``graph``.  Response nodes and golden counts use the set of
    distinct response tokens.
    """
    n = len(pairs)
    resp_total = 0
    amount = [0, 0, 0]
    golden = [0, 0, 0]
    for p in pairs:
        resp = {graph.node_id(t) for t in set(p.response) if graph.has_node(t)}
        resp_total += len(resp)
        sg = retriever(p.post)
        for h, hop in enumerate((sg.v0, sg.v1, sg.v2)):
            amount[h] += len(hop)
            golden[h] += len(hop & resp)
    div = float(n) if n else 1.0
    return CoverageStats(
        num_pairs=n, nodes=graph.num_nodes, edges=graph.num_edges,
        response_nodes=resp_total / div,
        amount=tuple(a / div for a in amount),
        golden=tuple(g / div for g in golden),
    )
