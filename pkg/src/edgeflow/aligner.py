"""IBM Model 1 alignment between post concepts and response concepts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import CorpusFormatError, DialogPair
from .fsutil import atomic_write_text

NULL = "<null>"


class HasNodes(Protocol):
    def has_node(self, concept: str) -> bool: ...


@dataclass(frozen=True)
class ConceptPair:
    source: tuple[str, ...]
    target: tuple[str, ...]


@dataclass(frozen=True)
class AlignmentConfig:
    em_iterations: int = 10
    null_word: bool = True
    min_prob_floor: float = 0.0

    def __post_init__(self) -> None:
        if self.em_iterations < 1:
            raise ValueError("em_iterations must be >= 1")
        if not 0.0 <= self.min_prob_floor < 1.0:
            raise ValueError("min_prob_floor must lie in [0, 1)")


@dataclass
class AlignmentTable:
    """Sparse t(target | source).  Rows are kept in first-seen source order."""

    probs: dict[str, dict[str, float]]
    log_likelihoods: list[float] = field(default_factory=list)

    def prob(self, source: str, target: str) -> float:
        return self.probs.get(source, {}).get(target, 0.0)

    def row(self, source: str) -> dict[str, float]:
        return self.probs.get(source, {})

    def sources(self) -> list[str]:
        return sorted(self.probs)

    def ranked(self, source: str) -> list[tuple[str, float]]:
        return sorted(self.row(source).items(), key=lambda kv: (-kv[1], kv[0]))

    def support(self, include_null: bool = False) -> set[tuple[str, str]]:
        return {(s, t) for s, row in self.probs.items() if include_null or s != NULL for t in row}

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_tsv())

    def to_tsv(self) -> str:
        lines = []
        for s in self.sources():
            for t, p in self.ranked(s):
                lines.append(f"{s}\t{t}\t{p!r}\n")
        return "".join(lines)

    @classmethod
    def load(cls, path: str | Path) -> "AlignmentTable":
        probs: dict[str, dict[str, float]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                try:
                    s, t, p = parts
                    value = float(p)
                except ValueError:
                    raise CorpusFormatError(f"{path}:{lineno}: expected 'source<TAB>target<TAB>prob'") from None
                probs.setdefault(s, {})[t] = value
        return cls(probs)


def prepare_concept_pairs(pairs: Iterable[DialogPair], graph: HasNodes) -> list[ConceptPair]:
    out = []
    for p in pairs:
        src = tuple(t for t in p.post if graph.has_node(t))
        tgt = tuple(t for t in p.response if graph.has_node(t))
        if src and tgt:
            out.append(ConceptPair(src, tgt))
    return out


def _sources(cp: ConceptPair, null_word: bool) -> tuple[str, ...]:
    return ((NULL,) + cp.source) if null_word else cp.source


def log_likelihood(table: dict[str, dict[str, float]], pairs: Sequence[ConceptPair], null_word: bool) -> float:
    """Corpus log-likelihood under Model 1, dropping the length term."""
    total = 0.0
    for cp in pairs:
        src = _sources(cp, null_word)
        for f in cp.target:
            total += math.log(sum(table[e][f] for e in src) / len(src))
    return total


def train_ibm1(pairs: Sequence[ConceptPair], config: AlignmentConfig = AlignmentConfig()) -> AlignmentTable:
    """EM for IBM Model 1.

    t starts uniform over the targets each source co-occurs with.  The
    log-likelihood of every iterate (including the final table) is stored in
    ``log_likelihoods``.
    """
    if not pairs:
        raise ValueError("train_ibm1 needs at least one concept pair")
    cooc: dict[str, dict[str, None]] = {}
    for cp in pairs:
        for e in _sources(cp, config.null_word):
            row = cooc.setdefault(e, {})
            for f in cp.target:
                row[f] = None
    t = {e: {f: 1.0 / len(row) for f in row} for e, row in cooc.items()}

    lls = []
    for _ in range(config.em_iterations):
        counts = {e: dict.fromkeys(row, 0.0) for e, row in t.items()}
        totals = dict.fromkeys(t, 0.0)
        ll = 0.0
        for cp in pairs:
            src = _sources(cp, config.null_word)
            for f in cp.target:
                denom = 0.0
                for e in src:
                    denom += t[e][f]
                ll += math.log(denom / len(src))
                for e in src:
                    c = t[e][f] / denom
                    counts[e][f] += c
                    totals[e] += c
        lls.append(ll)
        t = {e: {f: c / totals[e] for f, c in row.items()} for e, row in counts.items()}
    lls.append(log_likelihood(t, pairs, config.null_word))

    if config.min_prob_floor > 0.0:
        floored = {}
        for e, row in t.items():
            kept = {f: p for f, p in row.items() if p >= config.min_prob_floor}
            if not kept:
                continue
            z = sum(kept.values())
            floored[e] = {f: p / z for f, p in kept.items()}
        t = floored
    return AlignmentTable(t, lls)


def top_k_targets(table: AlignmentTable, source: str, k: int) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return table.ranked(source)[:k]
