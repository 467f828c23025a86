"""GRU encoder/decoder with text and graph attention plus a copy gate.

Decoder step t:

    s_t      = GRU(s_{t-1}, [emb(y_{t-1}); c_text_{t-1}; c_graph_{t-1}])
    c_text_t = additive attention of s_t over the post states
    a_t      = additive attention of s_t over the Edge-Transformer rows
    sigma    = sigmoid(FFN_gate(s_t))
    p_vocab  = softmax(FFN_vocab(s_t))
    p_copy   = softmax over subgraph nodes of (copy_scale * graph scores)
    p_t      = (1 - sigma) * p_vocab  ++  sigma * p_copy

``p_t`` lives on the extended space [vocabulary ; subgraph node_order].
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import numcore as nc
from .corpus import BOS_ID, EOS, EOS_ID, UNK_ID, DialogPair, Vocabulary
from .edgeformer import EdgeTransformer, EdgeTransformerConfig, GraphBatch, collate
from .kgraph import KnowledgeGraph
from .subgraph import Subgraph


@dataclass(frozen=True)
class Seq2SeqConfig:
    hidden_dim: int = 64
    embedding_dim: int = 64
    encoder_layers: int = 2
    decoder_layers: int = 2
    dropout: float = 0.2
    max_decode_len: int = 20

    def __post_init__(self) -> None:
        if min(self.hidden_dim, self.embedding_dim, self.encoder_layers, self.decoder_layers,
               self.max_decode_len) < 1:
            raise ValueError("Seq2SeqConfig dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class DecoderState:
    s: list[nc.Tensor]          # one (B, H) state per decoder layer; s[-1] is s_t
    c_text: nc.Tensor
    c_graph: nc.Tensor


@dataclass
class GenerationStep:
    """Batched outputs of one decoder step (leading axis is the batch)."""

    gate_logit: nc.Tensor       # (B,)
    vocab_logits: nc.Tensor     # (B, V)
    copy_logits: nc.Tensor      # (B, N)
    copy_mask: np.ndarray       # (B, N) real subgraph nodes
    graph_attention: np.ndarray  # (B, S) a_t over graph rows, X' included
    forced_gate: float | None = None

    @property
    def has_graph(self) -> np.ndarray:
        return self.copy_mask.any(axis=-1)

    @property
    def sigma(self) -> np.ndarray:
        if self.forced_gate is not None:
            sig = np.full(self.gate_logit.shape, float(self.forced_gate))
        else:
            sig = nc._sigmoid_np(self.gate_logit.data)
        return np.where(self.has_graph, sig, 0.0)

    @property
    def p_vocab(self) -> np.ndarray:
        return nc.softmax(nc.Tensor(self.vocab_logits.data)).data

    @property
    def p_copy(self) -> np.ndarray:
        if self.copy_logits.shape[-1] == 0:
            return np.zeros(self.copy_logits.shape)
        return nc.masked_softmax(nc.Tensor(self.copy_logits.data), self.copy_mask).data

    @property
    def p_t(self) -> np.ndarray:
        sig = self.sigma[:, None]
        return np.concatenate([(1.0 - sig) * self.p_vocab, sig * self.p_copy], axis=-1)


@dataclass
class LossBreakdown:
    gen: nc.Tensor
    copy: nc.Tensor
    gate: nc.Tensor

    @property
    def total(self) -> nc.Tensor:
        return self.gen + self.copy + self.gate

    def values(self) -> dict[str, float]:
        return {"L_gen": self.gen.item(), "L_copy": self.copy.item(), "L_gate": self.gate.item(),
                "L": self.total.item()}


@dataclass
class Batch:
    post_ids: np.ndarray        # (B, Tp)
    post_mask: np.ndarray       # (B, Tp)
    dec_in: np.ndarray          # (B, Tr) BOS + reference[:-1]
    ref_ids: np.ndarray         # (B, Tr) reference + EOS
    ref_mask: np.ndarray        # (B, Tr)
    copy_target: np.ndarray     # (B, Tr) index into node_order, -1 when not a copy step
    graph: GraphBatch
    subgraphs: list[Subgraph] = field(default_factory=list)

    @property
    def copy_label(self) -> np.ndarray:
        return self.copy_target >= 0

    @property
    def size(self) -> int:
        return self.post_ids.shape[0]


def copy_targets(reference: Sequence[str], subgraph: Subgraph, graph: KnowledgeGraph) -> list[int]:
    """Per reference token, the first node_order index whose concept equals it (or -1)."""
    first: dict[str, int] = {}
    for i, nid in enumerate(subgraph.node_order):
        first.setdefault(graph.concept(nid), i)
    return [first.get(tok, -1) for tok in reference]


def make_batch(pairs: Sequence[DialogPair], subgraphs: Sequence[Subgraph], vocab: Vocabulary,
               graph: KnowledgeGraph, et_config: EdgeTransformerConfig) -> Batch:
    B = len(pairs)
    tp = max(len(p.post) for p in pairs)
    tr = max(len(p.response) for p in pairs) + 1
    post_ids = np.zeros((B, tp), dtype=np.int64)
    post_mask = np.zeros((B, tp), dtype=bool)
    dec_in = np.zeros((B, tr), dtype=np.int64)
    ref_ids = np.zeros((B, tr), dtype=np.int64)
    ref_mask = np.zeros((B, tr), dtype=bool)
    target = np.full((B, tr), -1, dtype=np.int64)
    for b, (p, sg) in enumerate(zip(pairs, subgraphs)):
        post_ids[b, :len(p.post)] = vocab.encode(p.post)
        post_mask[b, :len(p.post)] = True
        ref = vocab.encode(p.response) + [EOS_ID]
        ref_ids[b, :len(ref)] = ref
        ref_mask[b, :len(ref)] = True
        dec_in[b, :len(ref)] = [BOS_ID] + ref[:-1]
        target[b, :len(p.response)] = copy_targets(p.response, sg, graph)
    return Batch(post_ids, post_mask, dec_in, ref_ids, ref_mask, target,
                 collate(subgraphs, et_config), list(subgraphs))


class _Attention:
    """Additive attention: score_i = v . tanh(q W_q + k_i W_k + b)."""

    def __init__(self, store: nc.ParamStore, name: str, d_query: int, d_key: int, d_attn: int, rng):
        a = math.sqrt(3.0 / d_attn)
        self.w_q = store.add(f"{name}.w_q", (d_query, d_attn), f"uniform:{math.sqrt(3.0 / d_query)!r}", rng)
        self.w_k = store.add(f"{name}.w_k", (d_key, d_attn), f"uniform:{math.sqrt(3.0 / d_key)!r}", rng)
        self.b = store.add(f"{name}.b", (d_attn,), "zeros", rng)
        self.v = store.add(f"{name}.v", (d_attn,), f"uniform:{a!r}", rng)

    def keys(self, states: nc.Tensor) -> nc.Tensor:
        return nc.matmul(states, self.w_k)

    def scores(self, query: nc.Tensor, keys: nc.Tensor) -> nc.Tensor:
        B, T, A = keys.shape
        q = nc.reshape(nc.matmul(query, self.w_q) + self.b, (B, 1, A))
        return nc.matmul(nc.tanh(keys + q), self.v)          # (B, T)


def _context(weights: nc.Tensor, states: nc.Tensor) -> nc.Tensor:
    B, T = weights.shape
    return nc.reshape(nc.matmul(nc.reshape(weights, (B, 1, T)), states), (B, states.shape[-1]))


@dataclass
class EncodedInput:
    text_states: nc.Tensor       # (B, Tp, H)
    text_keys: nc.Tensor
    text_mask: np.ndarray
    post_vector: nc.Tensor       # (B, H)
    final_states: list[nc.Tensor]
    graph_rows: nc.Tensor        # (B, S, H)
    graph_keys: nc.Tensor
    graph_mask: np.ndarray       # (B, S)
    node_mask: np.ndarray        # (B, N)
    node_ids: np.ndarray         # (B, N)


class EdgeFlowModel:
    """All parameters of the generator, including the graph encoder."""

    def __init__(self, vocab_size: int, num_nodes: int, num_relations: int,
                 config: Seq2SeqConfig = Seq2SeqConfig(),
                 et_config: EdgeTransformerConfig | None = None,
                 seed: int = 0, node_init: np.ndarray | None = None):
        et_config = et_config or EdgeTransformerConfig(hidden_dim=config.hidden_dim)
        if et_config.hidden_dim != config.hidden_dim:
            raise ValueError("edge-transformer hidden_dim must equal the seq2seq hidden_dim")
        self.config = config
        self.et_config = et_config
        self.vocab_size = vocab_size
        self.num_nodes = num_nodes
        self.num_relations = num_relations
        self.seed = seed
        self.forced_gate: float | None = None
        rng = np.random.default_rng(seed)
        H, E = config.hidden_dim, config.embedding_dim
        st = self.params = nc.ParamStore()
        self.word_emb = st.add("embed.word", (vocab_size, E), "normal:0.5", rng)
        self.node_emb = st.add("embed.node", (max(num_nodes, 1), H), "normal:0.5", rng)
        if node_init is not None:
            if node_init.shape != self.node_emb.shape:
                raise nc.ShapeError(f"node_init shape {node_init.shape} vs {self.node_emb.shape}")
            self.node_emb.data[...] = node_init
            self.node_emb.init = "file"
        self.encoder = [st.gru(f"encoder.{l}", E if l == 0 else H, H, rng) for l in range(config.encoder_layers)]
        self.edgeformer = EdgeTransformer(et_config, num_relations, st, rng)
        self.decoder = [st.gru(f"decoder.{l}", E + 2 * H if l == 0 else H, H, rng)
                        for l in range(config.decoder_layers)]
        self.text_attn = _Attention(st, "attn.text", H, H, H, rng)
        self.graph_attn = _Attention(st, "attn.graph", H, H, H, rng)
        self.gate = st.ffn("head.gate", H, H, 1, rng)
        self.vocab_head = st.ffn("head.vocab", H, H, vocab_size, rng)
        self.copy_scale = st.add("head.copy_scale", (1,), "ones", rng)

    # ------------------------------------------------------------ identity
    def config_dict(self) -> dict:
        return {"seq2seq": asdict(self.config), "edgeformer": asdict(self.et_config),
                "vocab_size": self.vocab_size, "num_nodes": self.num_nodes,
                "num_relations": self.num_relations}

    def config_hash(self) -> bytes:
        blob = json.dumps(self.config_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()

    # ------------------------------------------------------------ encoder
    def encode_post(self, post_ids: np.ndarray, post_mask: np.ndarray | None = None,
                    dropout: float = 0.0, rng: np.random.Generator | None = None):
        """Run the stacked GRU over (B, T) ids.

        Returns (per-token top-layer states (B, T, H), X' source (B, H), final
        state of every layer).  Padding steps carry the previous state forward,
        so X' is the top state at each post's last real token.
        """
        post_ids = np.atleast_2d(np.asarray(post_ids, dtype=np.int64))
        if post_ids.shape[1] == 0:
            raise ValueError("encode_post needs a non-empty post")
        if post_mask is None:
            post_mask = np.ones(post_ids.shape, dtype=bool)
        if not post_mask[:, 0].all():
            raise ValueError("encode_post needs a non-empty post")
        B, T = post_ids.shape
        H = self.config.hidden_dim
        p = dropout
        x = nc.dropout(nc.take_rows(self.word_emb, post_ids), p, rng)
        h = [nc.Tensor(np.zeros((B, H))) for _ in self.encoder]
        tops = []
        for t in range(T):
            keep = post_mask[:, t:t + 1].astype(float)
            inp = x[:, t, :]
            for l, cell in enumerate(self.encoder):
                new = nc.gru_cell(inp, h[l], cell)
                if keep.all():
                    h[l] = new
                else:
                    h[l] = new * nc.Tensor(keep) + h[l] * nc.Tensor(1.0 - keep)
                inp = nc.dropout(h[l], p, rng) if l + 1 < len(self.encoder) else h[l]
            tops.append(h[-1])
        states = nc.stack(tops, axis=1)
        return states, h[-1], h

    # ------------------------------------------------------------ graph
    def encode_graph(self, graph: GraphBatch, post_vector: nc.Tensor) -> nc.Tensor:
        B = graph.node_ids.shape[0]
        H = self.config.hidden_dim
        rows = nc.take_rows(self.node_emb, graph.node_ids)              # (B, N, H)
        if graph.has_post_node:
            rows = nc.concat([rows, nc.reshape(post_vector, (B, 1, H))], axis=1)
        if rows.shape[1] == 0:
            return rows
        return self.edgeformer.forward(rows, graph.mask, graph.types)[-1]

    def encode_input(self, batch: Batch, dropout: float = 0.0, rng=None) -> EncodedInput:
        states, post_vec, finals = self.encode_post(batch.post_ids, batch.post_mask, dropout, rng)
        rows = self.encode_graph(batch.graph, post_vec)
        return EncodedInput(
            text_states=states, text_keys=self.text_attn.keys(states), text_mask=batch.post_mask,
            post_vector=post_vec, final_states=finals,
            graph_rows=rows, graph_keys=self.graph_attn.keys(rows) if rows.shape[1] else rows,
            graph_mask=batch.graph.row_valid, node_mask=batch.graph.node_valid,
            node_ids=batch.graph.node_ids,
        )

    def initial_state(self, enc: EncodedInput) -> DecoderState:
        B = enc.post_vector.shape[0]
        H = self.config.hidden_dim
        n_enc = len(enc.final_states)
        s = [enc.final_states[min(l, n_enc - 1)] for l in range(len(self.decoder))]
        zeros = nc.Tensor(np.zeros((B, H)))
        return DecoderState(s, zeros, zeros)

    # ------------------------------------------------------------ decoder
    def decoder_step(self, state: DecoderState, y_prev: np.ndarray, enc: EncodedInput,
                     dropout: float = 0.0, rng=None) -> tuple[DecoderState, GenerationStep]:
        p = dropout
        y = nc.dropout(nc.take_rows(self.word_emb, y_prev), p, rng)
        inp = nc.concat([y, state.c_text, state.c_graph], axis=-1)
        s = []
        for l, cell in enumerate(self.decoder):
            h = nc.gru_cell(inp, state.s[l], cell)
            s.append(h)
            inp = nc.dropout(h, p, rng) if l + 1 < len(self.decoder) else h
        s_t = s[-1]
        B, H = s_t.shape

        text_scores = self.text_attn.scores(s_t, enc.text_keys)
        c_text = _context(nc.masked_softmax(text_scores, enc.text_mask), enc.text_states)

        N = enc.node_mask.shape[1]
        if enc.graph_rows.shape[1] == 0:
            graph_scores = nc.Tensor(np.zeros((B, 0)))
            a_graph = np.zeros((B, 0))
            c_graph = nc.Tensor(np.zeros((B, H)))
        else:
            graph_scores = self.graph_attn.scores(s_t, enc.graph_keys)
            attn = nc.masked_softmax(graph_scores, enc.graph_mask)
            a_graph = attn.data
            c_graph = _context(attn, enc.graph_rows)
        copy_logits = graph_scores[:, :N] * self.copy_scale if N else nc.Tensor(np.zeros((B, 0)))

        step = GenerationStep(
            gate_logit=nc.reshape(self.gate(s_t), (B,)),
            vocab_logits=self.vocab_head(s_t),
            copy_logits=copy_logits,
            copy_mask=enc.node_mask,
            graph_attention=a_graph,
            forced_gate=self.forced_gate,
        )
        return DecoderState(s, c_text, c_graph), step

    def forward(self, batch: Batch, dropout: float = 0.0, rng=None) -> list[GenerationStep]:
        """Teacher-forced pass over the reference; one GenerationStep per position.

        ``dropout`` > 0 (with an ``rng``) is training mode.
        """
        enc = self.encode_input(batch, dropout, rng)
        state = self.initial_state(enc)
        steps = []
        for t in range(batch.dec_in.shape[1]):
            state, step = self.decoder_step(state, batch.dec_in[:, t], enc, dropout, rng)
            steps.append(step)
        return steps

    def loss(self, batch: Batch, dropout: float = 0.0, rng=None) -> LossBreakdown:
        steps = self.forward(batch, dropout, rng)
        return compute_loss(steps, batch.ref_ids, batch.copy_target, batch.ref_mask)


def compute_loss(steps: Sequence[GenerationStep], reference: np.ndarray, copy_target: np.ndarray,
                 mask: np.ndarray | None = None) -> LossBreakdown:
    """Generation, copy and gate losses, each a mean over its own tokens.

    ``reference`` and ``copy_target`` are (B, T) or (T,).  A step is a copy
    step when its copy target is >= 0.  L_gen averages over non-copy steps,
    L_copy over copy steps (0 when there are none), L_gate over all steps.
    """
    reference = np.atleast_2d(np.asarray(reference, dtype=np.int64))
    copy_target = np.atleast_2d(np.asarray(copy_target, dtype=np.int64))
    if len(steps) != reference.shape[1] or copy_target.shape != reference.shape:
        raise ValueError(f"compute_loss: {len(steps)} steps vs reference shape {reference.shape} "
                         f"and copy target shape {copy_target.shape}")
    if mask is None:
        mask = np.ones(reference.shape, dtype=bool)
    is_copy = (copy_target >= 0) & mask
    is_gen = (~is_copy) & mask
    n_tok = max(int(mask.sum()), 1)
    n_copy = int(is_copy.sum())
    n_gen = int(is_gen.sum())

    gen_terms, copy_terms, gate_terms = [], [], []
    for t, step in enumerate(steps):
        logp = nc.log_softmax(step.vocab_logits)
        nll_gen = -nc.pick(logp, reference[:, t])
        gen_terms.append(nc.tsum(nll_gen * nc.Tensor(is_gen[:, t].astype(float))))
        if is_copy[:, t].any():
            logc = nc.masked_log_softmax(step.copy_logits, step.copy_mask)
            nll_copy = -nc.pick(logc, np.maximum(copy_target[:, t], 0))
            copy_terms.append(nc.tsum(nll_copy * nc.Tensor(is_copy[:, t].astype(float))))
        g = step.gate_logit
        label = is_copy[:, t].astype(float)
        bce = nc.softplus(g) * nc.Tensor((1.0 - label)) + nc.softplus(-g) * nc.Tensor(label)
        # empty graphs force sigma = 0, so no gate loss there
        weight = (mask[:, t] & step.has_graph).astype(float)
        gate_terms.append(nc.tsum(bce * nc.Tensor(weight)))

    zero = nc.Tensor(0.0)
    l_gen = _sum(gen_terms) * (1.0 / n_gen) if n_gen else zero
    l_copy = _sum(copy_terms) * (1.0 / n_copy) if n_copy else zero
    l_gate = _sum(gate_terms) * (1.0 / n_tok)
    return LossBreakdown(l_gen, l_copy, l_gate)


def _sum(terms: list[nc.Tensor]) -> nc.Tensor:
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def token_probabilities(steps: Sequence[GenerationStep], reference: np.ndarray, copy_target: np.ndarray,
                        concept_mode: bool = False) -> np.ndarray:
    """(B, T) probability of each reference token.

    Default: the mixture p_t, i.e. (1 - sigma) p_vocab[ref] + sigma p_copy[node].
    ``concept_mode``: copy steps use p_copy alone, other steps p_vocab alone.
    """
    reference = np.atleast_2d(reference)
    copy_target = np.atleast_2d(copy_target)
    out = np.zeros(reference.shape)
    for t, step in enumerate(steps):
        pv = np.take_along_axis(step.p_vocab, reference[:, t:t + 1], axis=-1)[:, 0]
        tgt = copy_target[:, t]
        if step.copy_mask.shape[1]:
            pc = np.take_along_axis(step.p_copy, np.maximum(tgt, 0)[:, None], axis=-1)[:, 0]
        else:
            pc = np.zeros_like(pv)
        pc = np.where(tgt >= 0, pc, 0.0)
        if concept_mode:
            out[:, t] = np.where(tgt >= 0, pc, pv)
        else:
            sig = step.sigma
            out[:, t] = (1.0 - sig) * pv + sig * pc
    return out


# ---------------------------------------------------------------- decoding


def _select(enc: EncodedInput, idx: np.ndarray) -> EncodedInput:
    def take(t: nc.Tensor) -> nc.Tensor:
        return nc.Tensor(t.data[idx])
    return EncodedInput(
        text_states=take(enc.text_states), text_keys=take(enc.text_keys), text_mask=enc.text_mask[idx],
        post_vector=take(enc.post_vector), final_states=[take(s) for s in enc.final_states],
        graph_rows=take(enc.graph_rows), graph_keys=take(enc.graph_keys), graph_mask=enc.graph_mask[idx],
        node_mask=enc.node_mask[idx], node_ids=enc.node_ids[idx],
    )


def _emit(choice: int, b: int, V: int, enc: EncodedInput, vocab: Vocabulary, graph: KnowledgeGraph):
    """Map an extended-space index to (token string, next input id)."""
    if choice < V:
        return vocab.token(choice), choice
    concept = graph.concept(int(enc.node_ids[b, choice - V]))
    return concept, vocab.id(concept)


def greedy_decode(model: EdgeFlowModel, posts: Sequence[Sequence[str]], subgraphs: Sequence[Subgraph],
                  vocab: Vocabulary, graph: KnowledgeGraph, max_len: int | None = None) -> list[list[str]]:
    """Argmax over p_t per step until EOS or ``max_len``; ties take the lowest index."""
    max_len = max_len or model.config.max_decode_len
    pairs = [DialogPair(tuple(p), (EOS,)) for p in posts]
    batch = make_batch(pairs, subgraphs, vocab, graph, model.et_config)
    enc = model.encode_input(batch)
    state = model.initial_state(enc)
    B = batch.size
    V = model.vocab_size
    y = np.full(B, BOS_ID, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    out: list[list[str]] = [[] for _ in range(B)]
    for _ in range(max_len):
        state, step = model.decoder_step(state, y, enc)
        choice = np.argmax(step.p_t, axis=-1)
        for b in range(B):
            if done[b]:
                continue
            if choice[b] == EOS_ID:
                done[b] = True
                continue
            tok, y[b] = _emit(int(choice[b]), b, V, enc, vocab, graph)
            out[b].append(tok)
        if done.all():
            break
    return out


def beam_decode(model: EdgeFlowModel, post: Sequence[str], subgraph: Subgraph, vocab: Vocabulary,
                graph: KnowledgeGraph, width: int = 4, max_len: int | None = None) -> list[str]:
    """Beam search over log p_t for a single post; width 1 equals greedy."""
    if width == 1:
        return greedy_decode(model, [post], [subgraph], vocab, graph, max_len)[0]
    max_len = max_len or model.config.max_decode_len
    batch = make_batch([DialogPair(tuple(post), (EOS,))], [subgraph], vocab, graph, model.et_config)
    enc1 = model.encode_input(batch)
    V = model.vocab_size
    beams = [(0.0, [], BOS_ID)]       # (log prob, tokens, next input)
    state_rows = np.zeros(1, dtype=np.int64)
    enc = _select(enc1, state_rows)
    state = model.initial_state(enc)
    finished: list[tuple[float, list[str]]] = []
    for _ in range(max_len):
        y = np.array([b[2] for b in beams], dtype=np.int64)
        state, step = model.decoder_step(state, y, enc)
        with np.errstate(divide="ignore"):
            logp = np.log(step.p_t)
        cands = []
        for i, (score, toks, _) in enumerate(beams):
            for c in np.argsort(-logp[i], kind="stable")[:width]:
                if np.isfinite(logp[i, c]):
                    cands.append((score + float(logp[i, c]), i, int(c)))
        cands.sort(key=lambda x: (-x[0], x[1], x[2]))
        new_beams, rows = [], []
        for score, i, c in cands:
            if c == EOS_ID:
                finished.append((score, beams[i][1]))
            else:
                tok, nxt = _emit(c, 0, V, enc, vocab, graph)
                new_beams.append((score, beams[i][1] + [tok], nxt))
                rows.append(i)
            if len(new_beams) == width:
                break
        if not new_beams or len(finished) >= width:
            break
        rows_arr = np.array(rows, dtype=np.int64)
        state = DecoderState([nc.Tensor(s.data[rows_arr]) for s in state.s],
                             nc.Tensor(state.c_text.data[rows_arr]), nc.Tensor(state.c_graph.data[rows_arr]))
        enc = _select(enc1, np.zeros(len(rows), dtype=np.int64))
        beams = new_beams
    if not finished:
        finished = [(s, t) for s, t, _ in beams]
    return max(finished, key=lambda x: x[0])[1]
