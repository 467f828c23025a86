"""Reference-based generation metrics.

Hypotheses and references are token lists, one reference per hypothesis.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

Tokens = Sequence[str]

NIST_BETA = math.log(0.5) / math.log(2.0 / 3.0) ** 2
METEOR_ALPHA = 0.9      # recall weight 9 in the harmonic mean
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0
ROUGE_L_BETA = 1.2
_SUFFIXES = ("ingly", "edly", "ing", "ers", "ies", "ed", "es", "er", "ly", "s")


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> None:
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise ValueError("metrics need a non-empty corpus")


def _check_n(n: int) -> None:
    if not 1 <= n <= 4:
        raise ValueError(f"n must be in 1..4, got {n}")


# ---------------------------------------------------------------- BLEU / NIST


def modified_precision(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int) -> tuple[int, int]:
    """(clipped matches, hypothesis n-grams) summed over the corpus."""
    match = total = 0
    for h, r in zip(hyps, refs):
        hc = ngrams(h, n)
        rc = ngrams(r, n)
        match += sum(min(c, rc[g]) for g, c in hc.items())
        total += sum(hc.values())
    return match, total


def brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len == 0:
        return 0.0
    if hyp_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int = 4) -> float:
    """Corpus BLEU-n: geometric mean of orders 1..n times the brevity penalty.

    Orders >= 2 use add-one smoothing; unigram precision is left raw.
    """
    _check(hyps, refs)
    _check_n(n)
    log_sum = 0.0
    for k in range(1, n + 1):
        match, total = modified_precision(hyps, refs, k)
        if k == 1:
            if match == 0:
                return 0.0
            p = match / total
        else:
            p = (match + 1) / (total + 1)
        log_sum += math.log(p)
    bp = brevity_penalty(sum(map(len, hyps)), sum(map(len, refs)))
    return bp * math.exp(log_sum / n)


def nist_info(refs: Sequence[Tokens], n: int) -> dict[tuple, float]:
    """Information weight log2(count(w1..w_{k-1}) / count(w1..w_k)) per reference n-gram."""
    counts: list[Counter] = [Counter() for _ in range(n + 1)]
    for r in refs:
        for k in range(1, n + 1):
            counts[k].update(ngrams(r, k))
    n_words = sum(counts[1].values())
    info = {}
    for k in range(1, n + 1):
        for g, c in counts[k].items():
            prefix = n_words if k == 1 else counts[k - 1][g[:-1]]
            info[g] = math.log2(prefix / c)
    return info


def nist(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int = 4) -> float:
    """Cumulative NIST-n with the standard length penalty."""
    _check(hyps, refs)
    _check_n(n)
    info = nist_info(refs, n)
    score = 0.0
    for k in range(1, n + 1):
        gained = 0.0
        total = 0
        for h, r in zip(hyps, refs):
            hc = ngrams(h, k)
            rc = ngrams(r, k)
            gained += sum(min(c, rc[g]) * info[g] for g, c in hc.items() if g in rc)
            total += sum(hc.values())
        if total:
            score += gained / total
    hyp_len = sum(map(len, hyps))
    ref_len = sum(map(len, refs))
    ratio = min(hyp_len / ref_len, 1.0) if ref_len else 1.0
    if ratio <= 0:
        return 0.0
    return score * math.exp(NIST_BETA * math.log(ratio) ** 2)


# ---------------------------------------------------------------- ROUGE


def rouge_n(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int = 1) -> float:
    """Mean per-sentence n-gram recall; sentences whose reference is shorter than n are skipped."""
    _check(hyps, refs)
    scores = []
    for h, r in zip(hyps, refs):
        rc = ngrams(r, n)
        denom = sum(rc.values())
        if not denom:
            continue
        hc = ngrams(h, n)
        scores.append(sum(min(c, hc[g]) for g, c in rc.items()) / denom)
    return float(np.mean(scores)) if scores else 0.0


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_sentence(hyp: Tokens, ref: Tokens, beta: float = ROUGE_L_BETA) -> float:
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    _check(hyps, refs)
    return float(np.mean([rouge_l_sentence(h, r) for h, r in zip(hyps, refs)]))


# ---------------------------------------------------------------- METEOR-lite


def stem(token: str) -> str:
    for suf in _SUFFIXES:
        if token.endswith(suf) and len(token) - len(suf) >= 3:
            return token[:-len(suf)]
    return token


def align(hyp: Tokens, ref: Tokens) -> list[tuple[int, int]]:
    """Greedy unigram alignment: exact matches first, then stem matches.

    Each hypothesis token, left to right, takes the leftmost free reference
    token.  Returns (hyp index, ref index) pairs sorted by hyp index.
    """
    pairs: dict[int, int] = {}
    used: set[int] = set()
    for key in (lambda t: t, stem):
        for i, h in enumerate(hyp):
            if i in pairs:
                continue
            kh = key(h)
            for j, r in enumerate(ref):
                if j not in used and key(r) == kh:
                    pairs[i] = j
                    used.add(j)
                    break
    return sorted(pairs.items())


def count_chunks(alignment: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_sentence(hyp: Tokens, ref: Tokens) -> float:
    a = align(hyp, ref)
    m = len(a)
    if m == 0:
        return 0.0
    p = m / len(hyp)
    r = m / len(ref)
    fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (count_chunks(a) / m) ** METEOR_BETA
    return fmean * (1.0 - penalty)


def meteor_lite(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    """Mean sentence METEOR without synonym or paraphrase matching."""
    _check(hyps, refs)
    return float(np.mean([meteor_sentence(h, r) for h, r in zip(hyps, refs)]))


# ---------------------------------------------------------------- diversity


def _corpus_ngrams(hyps: Sequence[Tokens], n: int) -> Counter:
    if n < 1:
        raise ValueError("n must be positive")
    if not hyps:
        raise ValueError("metrics need a non-empty corpus")
    counts: Counter = Counter()
    for h in hyps:
        counts.update(ngrams(h, n))
    if not counts:
        raise ValueError(f"no hypothesis has {n} or more tokens")
    return counts


def dist_n(hyps: Sequence[Tokens], n: int) -> float:
    counts = _corpus_ngrams(hyps, n)
    return len(counts) / sum(counts.values())


def entropy_n(hyps: Sequence[Tokens], n: int) -> float:
    """Shannon entropy (nats) of the corpus n-gram distribution."""
    counts = _corpus_ngrams(hyps, n)
    c = np.array(list(counts.values()), dtype=float)
    p = c / c.sum()
    return float(-(p * np.log(p)).sum())


def perplexity(probs: np.ndarray) -> float:
    """exp(mean negative log) of per-token reference probabilities."""
    probs = np.asarray(probs, dtype=float).ravel()
    if probs.size == 0:
        raise ValueError("perplexity of an empty split is undefined")
    with np.errstate(divide="ignore"):
        return float(np.exp(-np.mean(np.log(probs))))


def concept_ppl(model, pairs, subgraphs, vocab, graph, batch_size: int = 30) -> float:
    """Perplexity scoring subgraph-concept steps under p_copy and the rest under p_vocab."""
    from .trainer import reference_probabilities
    return perplexity(reference_probabilities(model, pairs, subgraphs, vocab, graph, batch_size,
                                              concept_mode=True))


# ---------------------------------------------------------------- report


@dataclass
class EvalReport:
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    nist_1: float
    nist_2: float
    nist_3: float
    nist_4: float
    rouge_1: float
    rouge_2: float
    rouge_l: float
    meteor_lite: float
    dist_1: float
    dist_2: float
    entropy_4: float
    ppl: float | None = None
    concept_ppl: float | None = None

    # main table first, supplementary columns after
    COLUMNS = (("Bleu-3", "bleu_3"), ("Bleu-4", "bleu_4"), ("Nist-3", "nist_3"), ("Nist-4", "nist_4"),
               ("Rouge-1", "rouge_1"), ("Rouge-2", "rouge_2"), ("Rouge-L", "rouge_l"),
               ("Meteor-lite", "meteor_lite"), ("PPL", "ppl"), ("Ent-4", "entropy_4"),
               ("Bleu-1", "bleu_1"), ("Bleu-2", "bleu_2"), ("Nist-1", "nist_1"), ("Nist-2", "nist_2"),
               ("Dist-1", "dist_1"), ("Dist-2", "dist_2"), ("Concept-PPL", "concept_ppl"))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        heads, cells = [], []
        for head, key in self.COLUMNS:
            v = getattr(self, key)
            heads.append(head)
            cells.append("-" if v is None else f"{v:.4f}")
        widths = [max(len(h), len(c)) for h, c in zip(heads, cells)]
        line1 = "  ".join(h.rjust(w) for h, w in zip(heads, widths))
        line2 = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return line1 + "\n" + line2 + "\n"


def _safe(fn, *args) -> float:
    try:
        return fn(*args)
    except ValueError:
        return 0.0


def evaluate(hyps: Sequence[Tokens], refs: Sequence[Tokens], ppl: float | None = None,
             concept: float | None = None) -> EvalReport:
    """All text metrics at once; diversity scores fall back to 0 for too-short outputs."""
    _check(hyps, refs)
    return EvalReport(
        bleu_1=bleu(hyps, refs, 1), bleu_2=bleu(hyps, refs, 2),
        bleu_3=bleu(hyps, refs, 3), bleu_4=bleu(hyps, refs, 4),
        nist_1=nist(hyps, refs, 1), nist_2=nist(hyps, refs, 2),
        nist_3=nist(hyps, refs, 3), nist_4=nist(hyps, refs, 4),
        rouge_1=rouge_n(hyps, refs, 1), rouge_2=rouge_n(hyps, refs, 2), rouge_l=rouge_l(hyps, refs),
        meteor_lite=meteor_lite(hyps, refs),
        dist_1=_safe(dist_n, hyps, 1), dist_2=_safe(dist_n, hyps, 2), entropy_4=_safe(entropy_n, hyps, 4),
        ppl=ppl, concept_ppl=concept,
    )
