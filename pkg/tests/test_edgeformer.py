import math

import numpy as np
import pytest

from edgeflow import numcore as nc
from edgeflow.edgeformer import (FROM_TEXT_ID, NO_EDGE, SELF_TO_ID, TO_TEXT_ID, EdgeTransformer,
                                 EdgeTransformerConfig, augment, collate, encode, graph_structure,
                                 load_embedding_file)
from edgeflow.kgraph import KnowledgeGraph
from edgeflow.subgraph import Subgraph, retrieve

from conftest import random_digraph

D = 6
NREL = 7


def make_et(layers=1, seed=0, rel_scale=0.0, **flags):
    cfg = EdgeTransformerConfig(num_layers=layers, hidden_dim=D, **flags)
    store = nc.ParamStore()
    et = EdgeTransformer(cfg, NREL, store, np.random.default_rng(seed))
    if rel_scale:
        rng = np.random.default_rng(seed + 100)
        for layer in et.layers:
            layer["rel"].data[:] = rng.normal(0, rel_scale, layer["rel"].shape)
    return et, store


def np_ffn(x, f):
    hid = np.maximum(x @ f.first.weight.data + f.first.bias.data, 0.0)
    return hid @ f.second.weight.data + f.second.bias.data


def vanilla(h, et):
    """Reference single-head transformer block without masks or biases."""
    for layer in et.layers:
        q, k, v = (np_ffn(h, layer[n]) for n in "qkv")
        s = q @ k.T / math.sqrt(h.shape[1])
        a = np.exp(s - s.max(axis=1, keepdims=True))
        a /= a.sum(axis=1, keepdims=True)
        h = np_ffn(h + a @ v, layer["out"])
    return h


def run(et, h, mask, types):
    outs = et.forward(nc.Tensor(h[None]), mask[None], types[None])
    return [o.data[0] for o in outs]


def sub(nodes, edges):
    nodes = frozenset(nodes)
    return Subgraph(nodes, frozenset(), frozenset(), tuple(sorted(edges)))


# ---------------------------------------------------------------- structure


def test_empty_subgraph_is_post_node_only():
    mask, types = graph_structure(Subgraph.empty())
    assert mask.tolist() == [[True]]
    assert types.tolist() == [[SELF_TO_ID]]


def test_two_node_hand_mask():
    # nodes a=0, b=1 with edge a -> b (relation 5); X' is slot 2
    mask, types = graph_structure(sub({0, 1}, [(0, 5, 1)]))
    expect = np.array([
        [1, 0, 1],   # a hears itself and X', not b
        [1, 1, 1],   # b hears a, itself and X'
        [1, 1, 1],   # X' hears everyone
    ], dtype=bool)
    assert (mask == expect).all()
    assert types[1, 0] == 5
    assert types[0, 1] == NO_EDGE
    assert types[0, 2] == FROM_TEXT_ID and types[2, 0] == TO_TEXT_ID
    assert list(np.diag(types)) == [SELF_TO_ID] * 3


@pytest.mark.parametrize("seed", range(5))
def test_mask_matches_adjacency_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_digraph(rng, 10, 0.25)
    sg = sub(range(10), g.edges)
    mask, types = graph_structure(sg)
    pos = sg.position()
    for p in range(10):
        sources = {pos[h] for h, _, t in g.edges if pos[t] == p}
        allowed = set(np.flatnonzero(mask[p]))
        assert allowed == sources | {p, 10}
        for q in sources - {p}:
            assert types[p, q] == min(r for h, r, t in g.edges if pos[h] == q and pos[t] == p)
    assert mask[10].all()


def test_augment_dim_mismatch():
    with pytest.raises(nc.ShapeError):
        augment(Subgraph.empty(), nc.Tensor(np.zeros(3)), D)


def test_collate_places_post_node_last():
    sgs = [sub({0, 1, 2}, [(0, 4, 1)]), sub({3}, [])]
    b = collate(sgs, EdgeTransformerConfig(hidden_dim=D))
    assert b.mask.shape == (2, 4, 4)
    assert b.node_valid.tolist() == [[True, True, True], [True, False, False]]
    assert b.row_valid[1].tolist() == [True, False, False, True]
    # padding slots neither send nor receive
    assert not b.mask[1, 1].any() and not b.mask[1, :, 1].any()
    assert b.mask[1, 0, 3] and b.mask[1, 3, 0]


def test_collate_ablation_flags():
    sgs = [sub({0, 1}, [(0, 4, 1)])]
    no_post = collate(sgs, EdgeTransformerConfig(hidden_dim=D, use_post_node=False))
    assert no_post.mask.shape == (1, 2, 2)
    no_mask = collate(sgs, EdgeTransformerConfig(hidden_dim=D, use_edge_mask=False))
    assert no_mask.mask.all()


# ---------------------------------------------------------------- forward


def test_single_node_is_ffn_of_h_plus_value():
    et, _ = make_et(rel_scale=0.5)
    h = np.random.default_rng(1).normal(size=(1, D))
    out = run(et, h, np.ones((1, 1), bool), np.full((1, 1), SELF_TO_ID))[0]
    layer = et.layers[0]
    assert np.allclose(out, np_ffn(h + np_ffn(h, layer["v"]), layer["out"]), atol=1e-12)


def test_complete_graph_matches_vanilla_layer():
    et, _ = make_et(layers=2)
    n = 5
    edges = [(i, 4, j) for i in range(n) for j in range(n) if i != j]
    mask, types = graph_structure(sub(range(n), edges), use_post_node=False)
    h = np.random.default_rng(2).normal(size=(n, D))
    assert np.abs(run(et, h, mask, types)[-1] - vanilla(h, et)).max() < 1e-10


def test_all_ablations_match_vanilla_even_with_biases():
    et, _ = make_et(layers=2, rel_scale=1.0, use_post_node=False, use_edge_mask=False, use_edge_embedding=False)
    sg = sub(range(4), [(0, 4, 1), (2, 5, 3)])
    h = np.random.default_rng(3).normal(size=(4, D))
    enc = encode(augment(sg, None, D, use_post_node=False), nc.Tensor(h), et)
    assert np.abs(enc.final.data - vanilla(h, et)).max() < 1e-10


def test_edge_bias_changes_scores_only_when_enabled():
    h = np.random.default_rng(4).normal(size=(3, D))
    mask, types = graph_structure(sub(range(3), [(0, 4, 1), (1, 5, 2), (2, 6, 0)]))
    h = np.vstack([h, np.ones((1, D))])
    on, _ = make_et(rel_scale=1.0)
    off, _ = make_et(rel_scale=1.0, use_edge_embedding=False)
    zero, _ = make_et()
    assert not np.allclose(run(on, h, mask, types)[0], run(zero, h, mask, types)[0])
    assert np.array_equal(run(off, h, mask, types)[0], run(zero, h, mask, types)[0])


def test_chain_information_moves_one_hop_per_layer():
    et, _ = make_et(layers=3, rel_scale=0.3)
    mask, types = graph_structure(sub(range(3), [(0, 4, 1), (1, 4, 2)]), use_post_node=False)
    h = np.random.default_rng(5).normal(size=(3, D))
    h2 = h.copy()
    h2[0] += 0.5
    a, b = run(et, h, mask, types), run(et, h2, mask, types)
    assert np.array_equal(a[0][2], b[0][2])          # c untouched after layer 1
    assert not np.allclose(a[0][1], b[0][1])          # b already moved
    assert not np.allclose(a[1][2], b[1][2])          # c moves at layer 2


def _reach(mask, steps):
    r = np.eye(mask.shape[0], dtype=bool)
    for _ in range(steps):
        r = r | (mask.astype(int) @ r.astype(int) > 0)
    return r   # r[p, q]: q reaches p within steps


@pytest.mark.parametrize("seed", range(4))
def test_mask_soundness(seed):
    rng = np.random.default_rng(seed)
    g = random_digraph(rng, 9, 0.12)
    mask, types = graph_structure(sub(range(9), g.edges), use_post_node=False)
    et, _ = make_et(layers=2, seed=seed, rel_scale=0.5)
    h = rng.normal(size=(9, D))
    base = run(et, h, mask, types)[-1]
    reach = _reach(mask, 2)
    for q in range(9):
        h2 = h.copy()
        h2[q] += rng.normal(size=D)
        out = run(et, h2, mask, types)[-1]
        for p in range(9):
            if not reach[p, q]:
                assert np.array_equal(out[p], base[p])


def test_permutation_equivariance():
    rng = np.random.default_rng(6)
    g = random_digraph(rng, 7, 0.3)
    mask, types = graph_structure(sub(range(7), g.edges))
    et, _ = make_et(layers=2, rel_scale=0.5)
    h = rng.normal(size=(8, D))
    perm = rng.permutation(8)
    out = run(et, h, mask, types)[-1]
    out_p = run(et, h[perm], mask[np.ix_(perm, perm)], types[np.ix_(perm, perm)])[-1]
    assert np.allclose(out_p, out[perm], atol=1e-12)


def test_attention_rows_normalised_and_empty_rows_zero():
    et, _ = make_et(rel_scale=0.5)
    mask, types = graph_structure(sub(range(4), [(0, 4, 1), (1, 4, 2)]))
    mask[3] = False              # give X' no sources at all
    h = np.random.default_rng(7).normal(size=(5, D))
    attn = []
    out = et.forward(nc.Tensor(h[None]), mask[None], types[None], attention=attn)[0].data[0]
    a = attn[0][0, 0]
    assert np.allclose(a[[0, 1, 2, 4]].sum(axis=1), 1.0, atol=1e-9)
    assert (a[~mask] == 0).all()
    assert np.allclose(out[3], np_ffn(h[3], et.layers[0]["out"]), atol=1e-12)


def test_unregistered_relation():
    et, _ = make_et()
    with pytest.raises(ValueError, match="not registered"):
        run(et, np.zeros((1, D)), np.ones((1, 1), bool), np.full((1, 1), NREL))


def test_multi_head_runs_and_shapes():
    cfg = EdgeTransformerConfig(num_layers=1, hidden_dim=D, num_heads=2)
    et = EdgeTransformer(cfg, NREL, nc.ParamStore(), np.random.default_rng(0))
    attn = []
    mask, types = graph_structure(sub(range(2), [(0, 4, 1)]))
    et.forward(nc.Tensor(np.ones((1, 3, D))), mask[None], types[None], attention=attn)
    assert attn[0].shape == (1, 2, 3, 3)
    with pytest.raises(ValueError):
        EdgeTransformerConfig(hidden_dim=5, num_heads=2)


def test_gradients_on_six_node_graph():
    rng = np.random.default_rng(8)
    g = random_digraph(rng, 6, 0.3)
    sg = retrieve(["n0", "n1"], g)
    et, store = make_et(layers=2, rel_scale=0.3)
    n = len(sg.node_order)
    emb = rng.normal(size=(n, D))
    post = nc.Tensor(rng.normal(size=D))
    w = rng.normal(size=(n + 1, D))
    ag = augment(sg, post, D)

    def loss():
        return (encode(ag, nc.Tensor(emb), et).final * nc.Tensor(w)).sum()

    assert nc.finite_diff_check(loss, list(store)) < 1e-4


def test_embedding_file(tmp_path):
    g = KnowledgeGraph(["a", "b"])
    p = tmp_path / "e.txt"
    p.write_text("a\t1,2,3\nzzz\t0,0,0\n")
    table = load_embedding_file(p, g, 3, np.random.default_rng(0))
    assert table[0].tolist() == [1.0, 2.0, 3.0]
    assert np.abs(table[1]).max() <= 0.1
    p.write_text("a\t1,2\n")
    with pytest.raises(ValueError, match=":1:"):
        load_embedding_file(p, g, 3, np.random.default_rng(0))
