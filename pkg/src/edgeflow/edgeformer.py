"""Edge-Transformer: graph-masked attention with per-relation score bias.

Node p attends only to its sources S(p) (tails of edges q -> p), itself
(SelfTO) and the post node X' (FromText); X' attends to every node
(ToText).  Per layer:

    a[p, q] = Q(h_p) . K(h_q) / sqrt(d) + R[rel(q -> p)]    over q in S(p)
    u_p     = sum_q softmax(a[p, :])[q] * V(h_q)
    h_p'    = FFN(h_p + u_p)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numcore as nc
from .kgraph import FROM_TEXT, RESERVED_RELATIONS, SELF_TO, TO_TEXT, KnowledgeGraph
from .subgraph import Subgraph

SELF_TO_ID = RESERVED_RELATIONS.index(SELF_TO)
FROM_TEXT_ID = RESERVED_RELATIONS.index(FROM_TEXT)
TO_TEXT_ID = RESERVED_RELATIONS.index(TO_TEXT)
NO_EDGE = -1


@dataclass(frozen=True)
class EdgeTransformerConfig:
    num_layers: int = 3
    hidden_dim: int = 64
    num_heads: int = 1
    use_post_node: bool = True
    use_edge_mask: bool = True
    use_edge_embedding: bool = True

    def __post_init__(self) -> None:
        if self.num_layers < 1 or self.hidden_dim < 1 or self.num_heads < 1:
            raise ValueError("num_layers, hidden_dim and num_heads must be positive")
        if self.hidden_dim % self.num_heads:
            raise ValueError("hidden_dim must be divisible by num_heads")


@dataclass
class AugmentedGraph:
    """Subgraph nodes plus (optionally) X' as the last row.

    ``mask[p, q]`` is True iff q may send to p; ``types[p, q]`` holds the
    relation id of q -> p for allowed slots and -1 elsewhere.
    """

    node_ids: tuple[int, ...]
    mask: np.ndarray
    types: np.ndarray
    has_post_node: bool
    post_vector: nc.Tensor | None = None

    @property
    def size(self) -> int:
        return self.mask.shape[0]

    @property
    def post_index(self) -> int | None:
        return self.size - 1 if self.has_post_node else None


def graph_structure(subgraph: Subgraph, use_post_node: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Mask and relation-type matrices for a subgraph (X' last when present)."""
    n = len(subgraph.node_order)
    size = n + 1 if use_post_node else n
    mask = np.zeros((size, size), dtype=bool)
    types = np.full((size, size), NO_EDGE, dtype=np.int64)
    pos = subgraph.position()
    # edges are sorted, so the smallest relation id wins for parallel edges
    for h, r, t in subgraph.edges:
        q, p = pos[h], pos[t]
        if not mask[p, q]:
            mask[p, q] = True
            types[p, q] = r
    idx = np.arange(size)
    mask[idx, idx] = True
    types[idx, idx] = SELF_TO_ID
    if use_post_node:
        x = n
        mask[:n, x] = True
        types[:n, x] = FROM_TEXT_ID
        mask[x, :n] = True
        types[x, :n] = TO_TEXT_ID
    return mask, types


def augment(subgraph: Subgraph, post_vector: nc.Tensor | None, hidden_dim: int,
            use_post_node: bool = True) -> AugmentedGraph:
    if use_post_node:
        if post_vector is None or post_vector.shape[-1] != hidden_dim:
            got = None if post_vector is None else post_vector.shape
            raise nc.ShapeError(f"augment: post vector shape {got} vs hidden_dim {hidden_dim}")
    mask, types = graph_structure(subgraph, use_post_node)
    return AugmentedGraph(subgraph.node_order, mask, types, use_post_node,
                          post_vector if use_post_node else None)


@dataclass
class GraphBatch:
    """Padded batch layout: real nodes first, padding, then X' in the last slot."""

    node_ids: np.ndarray       # (B, Nmax) graph node ids, 0 for padding
    node_valid: np.ndarray     # (B, Nmax)
    mask: np.ndarray           # (B, S, S), S = Nmax (+1 with X')
    types: np.ndarray          # (B, S, S)
    has_post_node: bool
    sizes: list[int] = field(default_factory=list)

    @property
    def max_nodes(self) -> int:
        return self.node_ids.shape[1]

    @property
    def row_valid(self) -> np.ndarray:
        """(B, S) rows that are real nodes or X'."""
        if not self.has_post_node:
            return self.node_valid
        ones = np.ones((self.node_valid.shape[0], 1), dtype=bool)
        return np.concatenate([self.node_valid, ones], axis=1)


def collate(subgraphs: Sequence[Subgraph], config: EdgeTransformerConfig) -> GraphBatch:
    B = len(subgraphs)
    nmax = max((len(sg.node_order) for sg in subgraphs), default=0)
    size = nmax + 1 if config.use_post_node else nmax
    node_ids = np.zeros((B, nmax), dtype=np.int64)
    valid = np.zeros((B, nmax), dtype=bool)
    mask = np.zeros((B, size, size), dtype=bool)
    types = np.full((B, size, size), NO_EDGE, dtype=np.int64)
    sizes = []
    for b, sg in enumerate(subgraphs):
        n = len(sg.node_order)
        sizes.append(n)
        node_ids[b, :n] = sg.node_order
        valid[b, :n] = True
        m, t = graph_structure(sg, config.use_post_node)
        slots = list(range(n)) + ([size - 1] if config.use_post_node else [])
        ix = np.ix_(slots, slots)
        if not config.use_edge_mask:
            m = np.ones_like(m)
        mask[b][ix] = m
        types[b][ix] = t
    return GraphBatch(node_ids, valid, mask, types, config.use_post_node, sizes)


class EdgeTransformer:
    """Parameters and forward pass of the stacked Edge-Transformer layers."""

    def __init__(self, config: EdgeTransformerConfig, num_relations: int, store: nc.ParamStore,
                 rng: np.random.Generator, prefix: str = "edgeformer"):
        self.config = config
        self.num_relations = num_relations
        d = config.hidden_dim
        self.layers = []
        for l in range(config.num_layers):
            p = f"{prefix}.{l}"
            self.layers.append({
                "q": store.ffn(f"{p}.q", d, d, d, rng),
                "k": store.ffn(f"{p}.k", d, d, d, rng),
                "v": store.ffn(f"{p}.v", d, d, d, rng),
                "rel": store.add(f"{p}.rel_bias", (num_relations, config.num_heads), "zeros", rng),
                "out": store.ffn(f"{p}.out", d, d, d, rng),
            })

    def forward(self, h: nc.Tensor, mask: np.ndarray, types: np.ndarray,
                attention: list | None = None) -> list[nc.Tensor]:
        """h: (B, S, D); mask/types: (B, S, S).  Returns h after every layer.

        If ``attention`` is a list, each layer's (B, H, S, S) weights are appended.
        """
        cfg = self.config
        if types.size and types.max() >= self.num_relations:
            raise ValueError(f"relation id {int(types.max())} is not registered "
                             f"(table has {self.num_relations})")
        B, S, D = h.shape
        H = cfg.num_heads
        dh = D // H
        scale = 1.0 / math.sqrt(dh)
        head_mask = np.broadcast_to(mask[:, None, :, :], (B, H, S, S))
        has_type = types >= 0
        safe_types = np.where(has_type, types, 0)
        outs = []
        for layer in self.layers:
            q = _heads(layer["q"](h), B, S, H, dh)
            k = _heads(layer["k"](h), B, S, H, dh)
            v = _heads(layer["v"](h), B, S, H, dh)
            scores = nc.matmul(q, nc.swapaxes(k, -1, -2)) * scale          # (B,H,S,S)
            if cfg.use_edge_embedding:
                bias = nc.take_rows(layer["rel"], safe_types)               # (B,S,S,H)
                bias = bias * nc.Tensor(has_type[..., None].astype(float))
                scores = scores + _to_heads_first(bias)
            attn = nc.masked_softmax(scores, head_mask)
            if attention is not None:
                attention.append(attn.data)
            u = nc.matmul(attn, v)                                          # (B,H,S,dh)
            u = nc.reshape(nc.swapaxes(u, 1, 2), (B, S, D))
            h = layer["out"](h + u)
            outs.append(h)
        return outs


def _heads(x: nc.Tensor, B: int, S: int, H: int, dh: int) -> nc.Tensor:
    return nc.swapaxes(nc.reshape(x, (B, S, H, dh)), 1, 2)


def _to_heads_first(bias: nc.Tensor) -> nc.Tensor:
    # (B,S,S,H) -> (B,H,S,S)
    b = nc.swapaxes(bias, 2, 3)   # (B,S,H,S)
    return nc.swapaxes(b, 1, 2)   # (B,H,S,S)


@dataclass
class GraphEncoding:
    layers: list[nc.Tensor]

    @property
    def final(self) -> nc.Tensor:
        return self.layers[-1]


def encode(ag: AugmentedGraph, node_embeddings: nc.Tensor, model: EdgeTransformer) -> GraphEncoding:
    """Single-graph forward.  ``node_embeddings`` has one row per subgraph node;
    X' is taken from ``ag.post_vector`` and appended last."""
    n = len(ag.node_ids)
    if node_embeddings.shape[0] != n:
        raise nc.ShapeError(f"encode: embeddings shape {node_embeddings.shape} vs {n} subgraph nodes")
    h = node_embeddings
    if ag.has_post_node:
        h = nc.concat([h, nc.reshape(ag.post_vector, (1, -1))], axis=0)
    mask = ag.mask if model.config.use_edge_mask else np.ones_like(ag.mask)
    outs = model.forward(nc.reshape(h, (1,) + h.shape), mask[None], ag.types[None])
    return GraphEncoding([nc.reshape(o, o.shape[1:]) for o in outs])


def load_embedding_file(path: str | Path, graph: KnowledgeGraph, dim: int,
                        rng: np.random.Generator, scale: float = 0.1) -> np.ndarray:
    """Node embedding matrix from ``concept<TAB>v1,v2,...`` lines.

    Nodes missing from the file keep a random row.
    """
    table = rng.uniform(-scale, scale, size=(graph.num_nodes, dim))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            concept, _, vec = line.rstrip("\n").partition("\t")
            values = np.array([float(x) for x in vec.split(",")])
            if values.shape != (dim,):
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {values.size}")
            nid = graph.get_node_id(concept)
            if nid is not None:
                table[nid] = values
    return table
