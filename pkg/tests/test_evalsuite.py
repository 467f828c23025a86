import json
import math

import pytest

from edgeflow import evalsuite as ev
from edgeflow.corpus import EOS_ID, DialogPair
from edgeflow.subgraph import Subgraph

from conftest import tiny_model, toy_world
from oracles import FIXTURE_HYPS as H
from oracles import FIXTURE_REFS as R

# frozen from tests/oracles.py
FROZEN = {
    "bleu_1": 0.5842745080582082, "bleu_2": 0.4467371388383024,
    "bleu_3": 0.3242304257066873, "bleu_4": 0.27621968176116446,
    "nist_1": 2.6426432780657336, "nist_2": 2.8383649864294576,
    "nist_3": 2.8383649864294576, "nist_4": 2.8383649864294576,
    "rouge_1": 0.64, "rouge_2": 0.26, "rouge_l": 0.6296523166228517,
    "dist_1": 0.9473684210526315, "dist_2": 1.0,
    "entropy_1": 2.8714761180548676, "entropy_2": 2.6390573296152584, "entropy_4": 1.3862943611198906,
}


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_bleu_fixture(n):
    assert ev.bleu(H, R, n) == pytest.approx(FROZEN[f"bleu_{n}"], abs=1e-6)


def test_bleu_1_by_hand():
    # 13 clipped unigram matches out of 19, lengths 19 vs 22
    assert ev.bleu(H, R, 1) == pytest.approx(math.exp(1 - 22 / 19) * 13 / 19, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_nist_fixture(n):
    assert ev.nist(H, R, n) == pytest.approx(FROZEN[f"nist_{n}"], abs=1e-6)


def test_rouge_fixture():
    assert ev.rouge_n(H, R, 1) == pytest.approx(FROZEN["rouge_1"], abs=1e-6)
    assert ev.rouge_n(H, R, 2) == pytest.approx(FROZEN["rouge_2"], abs=1e-6)
    assert ev.rouge_l(H, R) == pytest.approx(FROZEN["rouge_l"], abs=1e-6)


def test_diversity_fixture():
    assert ev.dist_n(H, 1) == pytest.approx(FROZEN["dist_1"], abs=1e-6)
    assert ev.dist_n(H, 2) == pytest.approx(FROZEN["dist_2"], abs=1e-6)
    for n in (1, 2, 4):
        assert ev.entropy_n(H, n) == pytest.approx(FROZEN[f"entropy_{n}"], abs=1e-6)


def test_identity_scores():
    refs = [s for s in R if len(s) >= 4]
    for n in range(1, 5):
        assert ev.bleu(refs, refs, n) == pytest.approx(1.0, abs=1e-12)
    assert ev.rouge_n(refs, refs, 1) == 1.0
    assert ev.rouge_n(refs, refs, 2) == 1.0
    assert ev.rouge_l(refs, refs) == pytest.approx(1.0, abs=1e-12)
    expect = sum(1 - 0.5 / len(r) ** 3 for r in refs) / len(refs)
    assert ev.meteor_lite(refs, refs) == pytest.approx(expect, abs=1e-12)


def test_nist_identity_is_total_information():
    refs = [["a", "b", "a"]]
    # unigram info: a = log2(3/2), b = log2(3); bigrams ab, ba each log2(count(prefix)/1)
    uni = (2 * math.log2(3 / 2) + math.log2(3)) / 3
    bi = (math.log2(2) + math.log2(1)) / 2
    assert ev.nist(refs, refs, 2) == pytest.approx(uni + bi, abs=1e-12)


def test_no_overlap():
    assert ev.bleu([["a", "b"]], [["c", "d"]], 1) == 0.0
    assert ev.bleu([["a", "b"]], [["c", "d"]], 4) < 1e-3
    assert ev.meteor_lite([["walked"]], [["sky"]]) == 0.0
    assert ev.rouge_l([["x"]], [["y"]]) == 0.0


def test_rouge_l_hand_lcs():
    # LCS("a b c", "a x c") = 2, so P = R = 2/3 and F = 2/3
    assert ev.lcs_length("a b c".split(), "a x c".split()) == 2
    assert ev.rouge_l_sentence("a b c".split(), "a x c".split()) == pytest.approx(2 / 3, abs=1e-12)
    p, r = 2 / 4, 2 / 3
    f = (1 + 1.44) * p * r / (r + 1.44 * p)
    assert ev.rouge_l_sentence("a b c d".split(), "a x c".split()) == pytest.approx(f, abs=1e-12)


def test_lcs_matches_recursive_oracle():
    from oracles import lcs
    import random
    rnd = random.Random(0)
    for _ in range(50):
        a = [rnd.choice("abcd") for _ in range(rnd.randint(0, 9))]
        b = list(reversed(a)) if rnd.random() < 0.5 else [rnd.choice("abcd") for _ in range(rnd.randint(0, 9))]
        assert ev.lcs_length(a, b) == lcs(a, b)


def test_meteor_two_sentence_hand_formula():
    hyps = [["the", "cats", "sat"], ["b", "a"]]
    refs = [["the", "cat", "sat", "down"], ["a", "b"]]
    # sentence 1: 3 matches (cats~cat by stem), one chunk; P = 1, R = 3/4
    f1 = 0.75 / (0.9 + 0.1 * 0.75) * (1 - 0.5 * (1 / 3) ** 3)
    # sentence 2: 2 matches in 2 chunks, F = 1, penalty 0.5
    f2 = 0.5
    assert ev.meteor_lite(hyps, refs) == pytest.approx((f1 + f2) / 2, abs=1e-12)


def test_stemmer_keeps_three_letters():
    assert ev.stem("playing") == "play"
    assert ev.stem("games") == "gam"
    assert ev.stem("bus") == "bus"
    assert ev.stem("dogs") == "dog"


def test_dist_and_entropy_hand():
    assert ev.dist_n([["a", "a", "a"]], 1) == pytest.approx(1 / 3)
    assert ev.dist_n([["a", "b", "c"]], 1) == 1.0
    hyps = [["a", "b"], ["a", "c"], ["a", "b"], ["d"]]
    probs = [3 / 7, 2 / 7, 1 / 7, 1 / 7]
    assert ev.entropy_n(hyps, 1) == pytest.approx(-sum(p * math.log(p) for p in probs), abs=1e-12)
    with pytest.raises(ValueError):
        ev.entropy_n(hyps, 3)


def test_dist_non_increasing_with_duplicate():
    before = ev.dist_n(H, 1)
    assert ev.dist_n(H + [H[0]], 1) <= before


def test_errors():
    with pytest.raises(ValueError):
        ev.bleu([], [], 1)
    with pytest.raises(ValueError):
        ev.bleu([["a"]], [["a"], ["b"]], 1)
    with pytest.raises(ValueError):
        ev.nist([["a"]], [["a"]], 5)
    with pytest.raises(ValueError):
        ev.perplexity([])


def test_report_shapes():
    rep = ev.evaluate(H, R, ppl=12.5)
    d = json.loads(rep.to_json())
    assert d["bleu_4"] == pytest.approx(FROZEN["bleu_4"], abs=1e-6)
    assert d["concept_ppl"] is None
    for k in ("bleu_1", "bleu_2", "bleu_3", "bleu_4", "rouge_1", "rouge_2", "rouge_l", "meteor_lite",
              "dist_1", "dist_2"):
        assert 0.0 <= d[k] <= 1.0
    head, row = rep.to_table().splitlines()
    assert head.split()[:4] == ["Bleu-3", "Bleu-4", "Nist-3", "Nist-4"]
    assert row.split()[8] == "12.5000"
    assert row.split()[-1] == "-"


def test_metrics_are_pure():
    assert ev.evaluate(H, R).to_json() == ev.evaluate(H, R).to_json()


def test_concept_ppl_reductions():
    g, pairs, vocab, sgs = toy_world()
    model = tiny_model(len(vocab), g)
    model.params["head.vocab.1.weight"].data[...] = 0.0
    model.params["head.vocab.1.bias"].data[...] = 0.0
    # with no concepts anywhere it is the plain vocabulary perplexity
    no_concepts = [DialogPair.of(["zzz"], ["qqq", "www"])] * 2
    empty = [Subgraph.empty()] * 2
    assert ev.concept_ppl(model, no_concepts, empty, vocab, g) == pytest.approx(len(vocab), rel=1e-12)


def test_concept_ppl_three_step_hand():
    g, pairs, vocab, sgs = toy_world()
    model = tiny_model(len(vocab), g)
    model.params["head.vocab.1.weight"].data[...] = 0.0
    logits = [0.1 * i for i in range(len(vocab))]
    model.params["head.vocab.1.bias"].data[...] = logits
    model.params["head.copy_scale"].data[...] = 0.0     # uniform p_copy
    pair = pairs[0]                                      # "the bone" + EOS
    sg = sgs[0]
    assert "bone" in sg.concepts(g)
    z = sum(math.exp(x) for x in logits)
    p_the = math.exp(logits[vocab.id("the")]) / z
    p_eos = math.exp(logits[EOS_ID]) / z
    p_bone = 1 / len(sg.node_order)
    expect = math.exp(-(math.log(p_the) + math.log(p_bone) + math.log(p_eos)) / 3)
    assert ev.concept_ppl(model, [pair], [sg], vocab, g) == pytest.approx(expect, rel=1e-12)
